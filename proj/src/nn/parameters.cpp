#include "gresynth/nn/parameters.hpp"

#include <functional>
#include <numeric>

namespace gresynth::nn {

std::size_t ParameterLayout::add(std::string name, std::vector<int> shape) {
  const std::size_t size = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                           std::multiplies<std::size_t>());
  const std::size_t offset = total_;
  entries_.push_back({std::move(name), std::move(shape), offset, size});
  total_ += size;
  return offset;
}

const ParamEntry* ParameterLayout::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

bool operator==(const ParameterLayout& a, const ParameterLayout& b) {
  if (a.total_ != b.total_ || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.shape != y.shape || x.offset != y.offset) return false;
  }
  return true;
}

}  // namespace gresynth::nn
