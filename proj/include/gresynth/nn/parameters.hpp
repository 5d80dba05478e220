#pragma once
// Flat parameter storage. Every network registers its tensors into a
// ParameterLayout; values, gradients and optimizer moments then live in
// contiguous buffers that share that layout.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gresynth::nn {

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ParameterLayout {
 public:
  /// Registers a tensor and returns its offset into the flat buffer.
  std::size_t add(std::string name, std::vector<int> shape);

  std::size_t total() const noexcept { return total_; }
  const std::vector<ParamEntry>& entries() const noexcept { return entries_; }
  const ParamEntry* find(const std::string& name) const;

  friend bool operator==(const ParameterLayout& a, const ParameterLayout& b);

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

/// Raw and EMA parameter sets plus the iteration counter.
template <typename T>
struct WeightState {
  std::vector<T> raw;
  std::vector<T> ema;
  long long step = 0;

  bool congruent() const noexcept { return raw.size() == ema.size(); }
};

}  // namespace gresynth::nn
