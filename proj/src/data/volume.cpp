#include "gresynth/data/volume.hpp"

#include <cmath>

#include "gresynth/error.hpp"

namespace gresynth::data {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Echo: return "echo";
    case Modality::Qsm: return "qsm";
    case Modality::R2star: return "r2star";
    case Modality::T1w: return "t1w";
    case Modality::Labels: return "labels";
    case Modality::Mask: return "mask";
  }
  return "unknown";
}

Modality parse_modality(const std::string& name) {
  for (Modality m : {Modality::Echo, Modality::Qsm, Modality::R2star, Modality::T1w,
                     Modality::Labels, Modality::Mask})
    if (modality_name(m) == name) return m;
  throw DataError("unknown modality '" + name + "'");
}

Volume::Volume(int x, int y, int z, float fill)
    : nx(x), ny(y), nz(z),
      data(static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z),
           fill) {
  if (x < 0 || y < 0 || z < 0) throw ShapeError("negative volume dimension");
}

void Volume::reset_affine() {
  affine = {{{spacing[0], 0, 0, 0}, {0, spacing[1], 0, 0}, {0, 0, spacing[2], 0}}};
}

void Volume::validate() const {
  for (double s : spacing)
    if (!(s > 0.0)) throw DataError("voxel spacing must be positive");
  if (data.size() != static_cast<std::size_t>(nx) * ny * nz)
    throw DataError("volume data size does not match its dimensions");
  if (modality == Modality::Labels || modality == Modality::Mask) {
    for (float v : data)
      if (v != std::round(v)) throw DataError(modality_name(modality) + " volume holds non-integer codes");
  }
}

void require_same_grid(const Volume& a, const Volume& b, const std::string& what) {
  if (!a.same_grid(b))
    throw ShapeError(what + ": grids differ (" + std::to_string(a.nx) + "x" + std::to_string(a.ny) +
                     "x" + std::to_string(a.nz) + " vs " + std::to_string(b.nx) + "x" +
                     std::to_string(b.ny) + "x" + std::to_string(b.nz) + ")");
}

}  // namespace gresynth::data
