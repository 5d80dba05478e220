#pragma once
// Minimal reader/writer for NumPy .npy files (format 1.0, little-endian,
// C order). Supported dtypes: <f4, <f8, <i2, <i4, <i8, |u1.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gresynth::io {

void write_npy(const std::filesystem::path& path, std::span<const float> data,
               const std::vector<std::size_t>& shape);
void write_npy(const std::filesystem::path& path, std::span<const double> data,
               const std::vector<std::size_t>& shape);
void write_npy(const std::filesystem::path& path, std::span<const std::int64_t> data,
               const std::vector<std::size_t>& shape);

/// Reads any supported dtype and converts to T. Fills `shape`.
template <typename T>
std::vector<T> read_npy(const std::filesystem::path& path, std::vector<std::size_t>& shape);

}  // namespace gresynth::io
