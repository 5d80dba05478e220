#pragma once
// Volume preprocessing: pad/crop, min-max normalization, ROI masking,
// morphological dilation, R2* fitting, and axial slicing.

#include <array>
#include <string>
#include <vector>

#include "gresynth/data/volume.hpp"

namespace gresynth::data {

using Grid = std::array<int, 3>;

/// Placement of the original grid inside the target: original voxel i maps
/// to target voxel i + offset (per axis; negative offsets mean cropping).
struct PadCropInfo {
  Grid original{};
  Grid target{};
  Grid offset{};
};

/// Symmetric pad with `fill`, then center crop, to `target`. The affine is
/// shifted so world coordinates of retained voxels are unchanged.
Volume pad_crop(const Volume& v, const Grid& target, float fill = 0.0f,
                PadCropInfo* info = nullptr);
/// Maps a padded/cropped volume back onto the original grid; voxels that
/// were cropped away are set to `fill`.
Volume undo_pad_crop(const Volume& v, const PadCropInfo& info, float fill = 0.0f);

struct NormRecord {
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;
};

/// Min and max over voxels where mask is nonzero (all voxels without a mask),
/// pooled across every volume in the group.
NormRecord group_range(const std::vector<const Volume*>& group, const Volume* mask = nullptr);
/// Affine map sending rec.min to -1 and rec.max to +1. Voxels outside the
/// mask become `outside`. A degenerate record maps everything inside to 0.
Volume apply_normalization(const Volume& v, const NormRecord& rec, const Volume* mask = nullptr,
                           float outside = -1.0f);
/// Whole-volume normalization; warns and returns zeros when max == min.
Volume normalize(const Volume& v, NormRecord* rec = nullptr);
Volume denormalize(const Volume& v, const NormRecord& rec);

/// 6-connected dilation applied `voxels` times.
Volume dilate(const Volume& mask, int voxels);
/// Keeps voxels where mask is nonzero; others become `fill`.
Volume apply_roi_mask(const Volume& v, const Volume& mask, float fill);

/// Deep gray matter regions whose (dilated) masks gate the QSM and R2* maps.
struct RoiRegion {
  std::string name;
  std::vector<int> codes;  // left and right label codes
};
const std::vector<RoiRegion>& iron_roi_regions();

struct RoiMaskSet {
  std::vector<std::string> names;
  std::vector<Volume> masks;  // dilated and intersected with the brain mask
  int dilation_voxels = 3;
  Volume union_mask() const;
};
RoiMaskSet build_roi_masks(const Volume& labels, const Volume& brain_mask, int dilation_voxels);

/// Log-linear least-squares fit of S(TE) = S0 exp(-TE R2*), R2* in 1/ms.
/// Voxels with any non-positive echo get R2* = 0 and fit_mask 0.
Volume fit_r2star(const std::vector<Volume>& echoes, const std::vector<double>& tes,
                  Volume* fit_mask = nullptr);

/// One axial slice: rows y (ny), columns x (nx).
struct Slice2D {
  int index = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
};
std::vector<Slice2D> volume_to_slices(const Volume& v);
/// Reassembles by slice index; every index in [0, nz) must appear exactly once.
Volume slices_to_volume(const std::vector<Slice2D>& slices, int nz);

}  // namespace gresynth::data
