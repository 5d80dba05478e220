#include "gresynth/data/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gresynth/error.hpp"
#include "gresynth/log.hpp"

namespace gresynth::data {

Volume pad_crop(const Volume& v, const Grid& target, float fill, PadCropInfo* info) {
  const Grid orig{v.nx, v.ny, v.nz};
  Grid off{};
  for (int a = 0; a < 3; ++a) {
    const int d = target[a] - orig[a];
    off[a] = d >= 0 ? d / 2 : -((-d) / 2);
  }
  Volume out(target[0], target[1], target[2], fill);
  out.spacing = v.spacing;
  out.modality = v.modality;
  out.echo_time_ms = v.echo_time_ms;
  out.affine = v.affine;
  for (int r = 0; r < 3; ++r)
    for (int a = 0; a < 3; ++a) out.affine[r][3] -= v.affine[r][a] * off[a];

  const int x0 = std::max(0, off[0]), x1 = std::min(target[0], orig[0] + off[0]);
  for (int z = std::max(0, off[2]); z < std::min(target[2], orig[2] + off[2]); ++z)
    for (int y = std::max(0, off[1]); y < std::min(target[1], orig[1] + off[1]); ++y)
      for (int x = x0; x < x1; ++x) out.at(x, y, z) = v.at(x - off[0], y - off[1], z - off[2]);
  if (info) *info = {orig, target, off};
  return out;
}

Volume undo_pad_crop(const Volume& v, const PadCropInfo& info, float fill) {
  if (v.nx != info.target[0] || v.ny != info.target[1] || v.nz != info.target[2])
    throw ShapeError("undo_pad_crop: volume does not match the recorded target grid");
  const Grid inverse{-info.offset[0], -info.offset[1], -info.offset[2]};
  Volume out(info.original[0], info.original[1], info.original[2], fill);
  out.spacing = v.spacing;
  out.modality = v.modality;
  out.echo_time_ms = v.echo_time_ms;
  out.affine = v.affine;
  for (int r = 0; r < 3; ++r)
    for (int a = 0; a < 3; ++a) out.affine[r][3] -= v.affine[r][a] * inverse[a];
  for (int z = 0; z < out.nz; ++z) {
    const int sz = z + info.offset[2];
    if (sz < 0 || sz >= v.nz) continue;
    for (int y = 0; y < out.ny; ++y) {
      const int sy = y + info.offset[1];
      if (sy < 0 || sy >= v.ny) continue;
      for (int x = 0; x < out.nx; ++x) {
        const int sx = x + info.offset[0];
        if (sx >= 0 && sx < v.nx) out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  }
  return out;
}

NormRecord group_range(const std::vector<const Volume*>& group, const Volume* mask) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Volume* v : group) {
    if (mask) require_same_grid(*v, *mask, "normalization mask");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (mask && mask->data[i] == 0.0f) continue;
      const double x = v->data[i];
      if (!std::isfinite(x)) throw DataError("normalization input holds non-finite values");
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  NormRecord rec;
  if (!std::isfinite(lo)) {
    rec.degenerate = true;
    return rec;
  }
  rec.min = lo;
  rec.max = hi;
  rec.degenerate = !(hi > lo);
  return rec;
}

Volume apply_normalization(const Volume& v, const NormRecord& rec, const Volume* mask,
                           float outside) {
  if (mask) require_same_grid(v, *mask, "normalization mask");
  Volume out = v;
  const double range = rec.max - rec.min;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask && mask->data[i] == 0.0f) {
      out.data[i] = outside;
    } else if (rec.degenerate) {
      out.data[i] = 0.0f;
    } else {
      const double y = 2.0 * (static_cast<double>(v.data[i]) - rec.min) / range - 1.0;
      out.data[i] = static_cast<float>(std::clamp(y, -1.0, 1.0));
    }
  }
  return out;
}

Volume normalize(const Volume& v, NormRecord* rec) {
  const NormRecord r = group_range({&v});
  if (r.degenerate) warn("normalize: degenerate " + modality_name(v.modality) + " volume (max == min)");
  if (rec) *rec = r;
  return apply_normalization(v, r);
}

Volume denormalize(const Volume& v, const NormRecord& rec) {
  Volume out = v;
  const double half = 0.5 * (rec.max - rec.min);
  for (std::size_t i = 0; i < v.size(); ++i)
    out.data[i] = static_cast<float>((static_cast<double>(v.data[i]) + 1.0) * half + rec.min);
  return out;
}

Volume dilate(const Volume& mask, int voxels) {
  if (voxels < 0) throw ParameterError("dilation radius must be non-negative");
  Volume cur = mask;
  for (float& v : cur.data) v = v != 0.0f ? 1.0f : 0.0f;
  for (int it = 0; it < voxels; ++it) {
    Volume next = cur;
    for (int z = 0; z < cur.nz; ++z)
      for (int y = 0; y < cur.ny; ++y)
        for (int x = 0; x < cur.nx; ++x) {
          if (cur.at(x, y, z) == 0.0f) continue;
          if (x > 0) next.at(x - 1, y, z) = 1.0f;
          if (x + 1 < cur.nx) next.at(x + 1, y, z) = 1.0f;
          if (y > 0) next.at(x, y - 1, z) = 1.0f;
          if (y + 1 < cur.ny) next.at(x, y + 1, z) = 1.0f;
          if (z > 0) next.at(x, y, z - 1) = 1.0f;
          if (z + 1 < cur.nz) next.at(x, y, z + 1) = 1.0f;
        }
    cur = std::move(next);
  }
  return cur;
}

Volume apply_roi_mask(const Volume& v, const Volume& mask, float fill) {
  require_same_grid(v, mask, "apply_roi_mask");
  Volume out = v;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask.data[i] == 0.0f) out.data[i] = fill;
  return out;
}

const std::vector<RoiRegion>& iron_roi_regions() {
  static const std::vector<RoiRegion> regions{
      {"caudate", {11, 50}},  {"putamen", {12, 51}},  {"pallidum", {13, 52}},
      {"accumbens", {26, 58}}, {"thalamus", {10, 49}},
  };
  return regions;
}

Volume RoiMaskSet::union_mask() const {
  if (masks.empty()) throw DataError("empty ROI mask set");
  Volume u = masks.front();
  for (std::size_t m = 1; m < masks.size(); ++m)
    for (std::size_t i = 0; i < u.size(); ++i)
      if (masks[m].data[i] != 0.0f) u.data[i] = 1.0f;
  return u;
}

RoiMaskSet build_roi_masks(const Volume& labels, const Volume& brain_mask, int dilation_voxels) {
  require_same_grid(labels, brain_mask, "build_roi_masks");
  RoiMaskSet set;
  set.dilation_voxels = dilation_voxels;
  for (const auto& region : iron_roi_regions()) {
    Volume m(labels.nx, labels.ny, labels.nz);
    m.spacing = labels.spacing;
    m.affine = labels.affine;
    m.modality = Modality::Mask;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int code = static_cast<int>(labels.data[i]);
      if (std::find(region.codes.begin(), region.codes.end(), code) != region.codes.end())
        m.data[i] = 1.0f;
    }
    m = dilate(m, dilation_voxels);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (brain_mask.data[i] == 0.0f) m.data[i] = 0.0f;
    set.names.push_back(region.name);
    set.masks.push_back(std::move(m));
  }
  return set;
}

Volume fit_r2star(const std::vector<Volume>& echoes, const std::vector<double>& tes,
                  Volume* fit_mask) {
  if (echoes.size() != tes.size() || echoes.size() < 2)
    throw ParameterError("fit_r2star needs at least two echoes with matching echo times");
  for (std::size_t e = 1; e < tes.size(); ++e)
    if (!(tes[e] > tes[e - 1])) throw ParameterError("echo times must be strictly increasing");
  for (std::size_t e = 1; e < echoes.size(); ++e)
    require_same_grid(echoes[0], echoes[e], "fit_r2star");

  const std::size_t ne = tes.size();
  double tmean = 0.0;
  for (double t : tes) tmean += t;
  tmean /= static_cast<double>(ne);
  double sxx = 0.0;
  for (double t : tes) sxx += (t - tmean) * (t - tmean);

  Volume r2 = echoes[0];
  r2.modality = Modality::R2star;
  r2.echo_time_ms = 0.0;
  Volume flags = echoes[0];
  flags.modality = Modality::Mask;
  flags.echo_time_ms = 0.0;
  std::vector<double> logs(ne);
  for (std::size_t i = 0; i < r2.size(); ++i) {
    bool ok = true;
    for (std::size_t e = 0; e < ne; ++e) {
      const double s = echoes[e].data[i];
      if (!(s > 0.0)) {
        ok = false;
        break;
      }
      logs[e] = std::log(s);
    }
    if (!ok) {
      r2.data[i] = 0.0f;
      flags.data[i] = 0.0f;
      continue;
    }
    double ymean = 0.0;
    for (double y : logs) ymean += y;
    ymean /= static_cast<double>(ne);
    double sxy = 0.0;
    for (std::size_t e = 0; e < ne; ++e) sxy += (tes[e] - tmean) * (logs[e] - ymean);
    r2.data[i] = static_cast<float>(-sxy / sxx);
    flags.data[i] = 1.0f;
  }
  if (fit_mask) *fit_mask = std::move(flags);
  return r2;
}

std::vector<Slice2D> volume_to_slices(const Volume& v) {
  std::vector<Slice2D> out;
  out.reserve(static_cast<std::size_t>(v.nz));
  const std::size_t plane = v.slice_size();
  for (int z = 0; z < v.nz; ++z) {
    Slice2D s;
    s.index = z;
    s.height = v.ny;
    s.width = v.nx;
    const auto first = v.data.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z));
    s.pixels.assign(first, first + static_cast<std::ptrdiff_t>(plane));
    out.push_back(std::move(s));
  }
  return out;
}

Volume slices_to_volume(const std::vector<Slice2D>& slices, int nz) {
  if (slices.empty()) throw DataError("slices_to_volume: no slices");
  const int h = slices.front().height;
  const int w = slices.front().width;
  Volume v(w, h, nz);
  std::vector<char> seen(static_cast<std::size_t>(nz), 0);
  const std::size_t plane = v.slice_size();
  for (const auto& s : slices) {
    if (s.height != h || s.width != w || s.pixels.size() != plane)
      throw ShapeError("slices_to_volume: inconsistent slice shape");
    if (s.index < 0 || s.index >= nz) throw DataError("slice index out of range: " + std::to_string(s.index));
    if (seen[static_cast<std::size_t>(s.index)])
      throw DataError("duplicate slice index " + std::to_string(s.index));
    seen[static_cast<std::size_t>(s.index)] = 1;
    std::copy(s.pixels.begin(), s.pixels.end(),
              v.data.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(s.index)));
  }
  for (int z = 0; z < nz; ++z)
    if (!seen[static_cast<std::size_t>(z)]) throw DataError("missing slice index " + std::to_string(z));
  return v;
}

}  // namespace gresynth::data
