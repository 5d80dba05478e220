#pragma once
// NIfTI-1 single-file (.nii) reader and writer. Dimensions, spacing and the
// sform affine round-trip; the modality tag and echo time are stored in the
// header's descrip field. Label and mask volumes are written as int16, all
// others as float32. Readers accept uint8, int16, int32, uint16, float32 and
// float64 data and apply scl_slope/scl_inter.

#include <filesystem>

#include "gresynth/data/volume.hpp"

namespace gresynth::io {

void write_nifti(const std::filesystem::path& path, const data::Volume& v);
data::Volume read_nifti(const std::filesystem::path& path);

}  // namespace gresynth::io
