#pragma once
// 3D scalar grid. Voxel (x, y, z) lives at data[x + nx * (y + ny * z)],
// the NIfTI on-disk order, so axial slice z is one contiguous ny x nx plane.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace gresynth::data {

enum class Modality { Echo, Qsm, R2star, T1w, Labels, Mask };

std::string modality_name(Modality m);
/// Inverse of modality_name; throws DataError on unknown names.
Modality parse_modality(const std::string& name);

struct Volume {
  int nx = 0, ny = 0, nz = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm
  Modality modality = Modality::T1w;
  double echo_time_ms = 0.0;  // echoes only
  /// First three rows of the voxel-to-world affine.
  std::array<std::array<double, 4>, 3> affine{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}}};
  std::vector<float> data;

  Volume() = default;
  Volume(int x, int y, int z, float fill = 0.0f);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t slice_size() const noexcept { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int x, int y, int z) const noexcept {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) +
                                            static_cast<std::size_t>(ny) * z);
  }
  float& at(int x, int y, int z) noexcept { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const noexcept { return data[index(x, y, z)]; }
  bool same_grid(const Volume& o) const noexcept {
    return nx == o.nx && ny == o.ny && nz == o.nz;
  }
  /// Sets the affine to a diagonal spacing matrix.
  void reset_affine();
  /// Throws DataError on non-positive spacing, size mismatch or (for
  /// label and mask volumes) non-integer values.
  void validate() const;
};

/// Throws ShapeError unless a and b share a grid.
void require_same_grid(const Volume& a, const Volume& b, const std::string& what);

}  // namespace gresynth::data
