#include "gresynth/data/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "gresynth/data/phantom.hpp"
#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"
#include "gresynth/io/npy.hpp"

namespace gresynth::data {

using nlohmann::json;

ChannelSet parse_channel_set(const std::string& name) {
  if (name == "mgre5") return ChannelSet::Mgre5;
  if (name == "mgre5+qsm+r2star") return ChannelSet::Mgre5QsmR2star;
  throw ConfigError("unknown channel set '" + name + "' (expected mgre5 or mgre5+qsm+r2star)");
}

std::string channel_set_name(ChannelSet set) {
  return set == ChannelSet::Mgre5 ? "mgre5" : "mgre5+qsm+r2star";
}

int condition_channels(ChannelSet set) { return set == ChannelSet::Mgre5 ? 5 : 7; }

const std::vector<std::string>& slice_channel_order() {
  static const std::vector<std::string> order{"echo1", "echo2", "echo3", "echo4",
                                              "echo5", "qsm",   "r2star", "t1w"};
  return order;
}

PreprocessedSubject preprocess_subject(const std::filesystem::path& subject_dir,
                                       const std::string& subject_id,
                                       const PreprocessOptions& options) {
  const auto& names = phantom_file_names();
  for (const auto& n : names)
    if (!std::filesystem::exists(subject_dir / n))
      throw DataError("subject " + subject_id + " lacks " + n);

  std::vector<Volume> echoes;
  for (int e = 0; e < 5; ++e) {
    Volume v = io::read_nifti(subject_dir / names[static_cast<std::size_t>(e)]);
    v.modality = Modality::Echo;
    echoes.push_back(pad_crop(v, options.target_shape, 0.0f));
  }
  PadCropInfo pad;
  Volume qsm = pad_crop(io::read_nifti(subject_dir / names[5]), options.target_shape, 0.0f, &pad);
  Volume t1w = pad_crop(io::read_nifti(subject_dir / names[7]), options.target_shape, 0.0f);
  Volume labels = pad_crop(io::read_nifti(subject_dir / names[8]), options.target_shape, 0.0f);
  labels.modality = Modality::Labels;
  for (const auto& e : echoes) require_same_grid(e, qsm, "subject " + subject_id);
  require_same_grid(t1w, qsm, "subject " + subject_id);
  require_same_grid(labels, qsm, "subject " + subject_id);

  Volume mask = echoes[0];
  mask.modality = Modality::Mask;
  mask.echo_time_ms = 0.0;
  for (float& v : mask.data) v = v > 0.0f ? 1.0f : 0.0f;

  // Echo times come from the headers; files without them get the standard protocol.
  std::vector<double> tes;
  for (const auto& e : echoes) tes.push_back(e.echo_time_ms);
  if (std::any_of(tes.begin(), tes.end(), [](double t) { return t <= 0.0; })) tes = echo_times_ms();
  Volume r2star = fit_r2star(echoes, tes);

  PreprocessedSubject out;
  out.subject_id = subject_id;
  out.pad = pad;

  std::vector<const Volume*> echo_group;
  for (const auto& e : echoes) echo_group.push_back(&e);
  const NormRecord echo_norm = group_range(echo_group, &mask);
  const NormRecord qsm_norm = group_range({&qsm}, &mask);
  const NormRecord r2_norm = group_range({&r2star}, &mask);
  const NormRecord t1_norm = group_range({&t1w}, &mask);
  out.norms = {{"echo", echo_norm}, {"qsm", qsm_norm}, {"r2star", r2_norm}, {"t1w", t1_norm}};

  const RoiMaskSet rois = build_roi_masks(labels, mask, options.roi_dilation);
  const Volume roi = rois.union_mask();

  for (const auto& e : echoes) out.channels.push_back(apply_normalization(e, echo_norm, &mask));
  out.channels.push_back(apply_roi_mask(apply_normalization(qsm, qsm_norm, &mask), roi, -1.0f));
  out.channels.push_back(apply_roi_mask(apply_normalization(r2star, r2_norm, &mask), roi, -1.0f));
  out.channels.push_back(apply_normalization(t1w, t1_norm, &mask));
  out.brain_mask = std::move(mask);
  out.labels = std::move(labels);
  return out;
}

std::vector<float> subject_slice_array(const PreprocessedSubject& s) {
  const Volume& ref = s.channels.front();
  const std::size_t plane = ref.slice_size();
  const std::size_t nc = s.channels.size();
  std::vector<float> out(static_cast<std::size_t>(ref.nz) * nc * plane);
  for (int z = 0; z < ref.nz; ++z)
    for (std::size_t c = 0; c < nc; ++c) {
      const float* src = s.channels[c].data.data() + static_cast<std::size_t>(z) * plane;
      float* dst = out.data() + (static_cast<std::size_t>(z) * nc + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!(src[i] >= -1.0f && src[i] <= 1.0f))
          throw DataError("slice value outside [-1, 1] in " + s.subject_id + " channel " +
                          slice_channel_order()[c] + " slice " + std::to_string(z));
        dst[i] = src[i];
      }
    }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : entries) {
    json norms = json::object();
    for (const auto& [k, r] : e.norms)
      norms[k] = {{"min", r.min}, {"max", r.max}, {"degenerate", r.degenerate}};
    json j = {{"subject_id", e.subject_id}, {"slice_index", e.slice_index},
              {"split", e.split},           {"file", e.file},
              {"channels", e.channels},     {"norm", norms},
              {"checksum", e.checksum}};
    out << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.subject_id = j.at("subject_id").get<std::string>();
      e.slice_index = j.at("slice_index").get<int>();
      e.split = j.at("split").get<std::string>();
      e.file = j.at("file").get<std::string>();
      e.channels = j.at("channels").get<std::vector<std::string>>();
      for (const auto& [k, v] : j.at("norm").items())
        e.norms[k] = {v.at("min").get<double>(), v.at("max").get<double>(),
                      v.at("degenerate").get<bool>()};
      e.checksum = j.at("checksum").get<std::uint32_t>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::string> manifest_subjects(const std::vector<ManifestEntry>& manifest,
                                           const std::string& split) {
  std::vector<std::string> out;
  for (const auto& e : manifest) {
    if (!split.empty() && e.split != split) continue;
    if (out.empty() || out.back() != e.subject_id) {
      if (std::find(out.begin(), out.end(), e.subject_id) == out.end()) out.push_back(e.subject_id);
    }
  }
  return out;
}

SliceDataset load_slices(const std::filesystem::path& work_dir,
                         const std::vector<ManifestEntry>& manifest, const std::string& split,
                         int n_conditions) {
  const int total_channels = static_cast<int>(slice_channel_order().size());
  if (n_conditions < 1 || n_conditions >= total_channels)
    throw ConfigError("condition channel count " + std::to_string(n_conditions) + " out of range");

  struct Pick {
    const ManifestEntry* entry;
  };
  std::vector<Pick> picks;
  for (const auto& e : manifest)
    if (split.empty() || e.split == split) {
      if (e.channels != slice_channel_order())
        throw DataError("manifest channel order for " + e.subject_id + " does not match " +
                        "echo1..echo5, qsm, r2star, t1w");
      picks.push_back({&e});
    }
  if (picks.empty()) throw DataError("no slices in split '" + split + "'");

  std::map<std::string, std::pair<std::vector<float>, std::vector<std::size_t>>> cache;
  int h = 0, w = 0;
  for (const auto& p : picks) {
    if (cache.contains(p.entry->file)) continue;
    const auto path = work_dir / p.entry->file;
    if (file_crc32(path) != p.entry->checksum)
      throw DataError("checksum mismatch for " + path.string());
    std::vector<std::size_t> shape;
    auto arr = io::read_npy<float>(path, shape);
    if (shape.size() != 4 || static_cast<int>(shape[1]) != total_channels)
      throw DataError("unexpected slice array shape in " + path.string());
    if (h == 0) {
      h = static_cast<int>(shape[2]);
      w = static_cast<int>(shape[3]);
    } else if (h != static_cast<int>(shape[2]) || w != static_cast<int>(shape[3])) {
      throw ShapeError("slice arrays disagree on in-plane size");
    }
    cache.emplace(p.entry->file, std::make_pair(std::move(arr), std::move(shape)));
  }

  const int m = static_cast<int>(picks.size());
  SliceDataset ds;
  ds.conditions = Tensor<float>({m, n_conditions, h, w});
  ds.targets = Tensor<float>({m, 1, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < m; ++i) {
    const ManifestEntry& e = *picks[static_cast<std::size_t>(i)].entry;
    const auto& [arr, shape] = cache.at(e.file);
    if (e.slice_index < 0 || static_cast<std::size_t>(e.slice_index) >= shape[0])
      throw DataError("slice index out of range for " + e.subject_id);
    const float* src = arr.data() + static_cast<std::size_t>(e.slice_index) * total_channels * plane;
    std::copy_n(src, static_cast<std::size_t>(n_conditions) * plane, ds.conditions.sample(i));
    std::copy_n(src + static_cast<std::size_t>(total_channels - 1) * plane, plane, ds.targets.sample(i));
    ds.subject_ids.push_back(e.subject_id);
    ds.slice_indices.push_back(e.slice_index);
  }
  return ds;
}

}  // namespace gresynth::data
