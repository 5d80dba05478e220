#pragma once
// Subject-level preprocessing into slice arrays, the slice manifest, and
// loading slice datasets for training and sampling.
//
// Slice arrays are per-subject .npy files of shape [Z, 8, H, W] holding the
// channels in slice_channel_order(): echo1..echo5, qsm, r2star, t1w. A model
// with the mgre5 channel set reads the first five channels, mgre5+qsm+r2star
// the first seven; the last channel is always the target.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gresynth/data/preprocess.hpp"
#include "gresynth/data/volume.hpp"
#include "gresynth/tensor.hpp"

namespace gresynth::data {

enum class ChannelSet { Mgre5, Mgre5QsmR2star };
ChannelSet parse_channel_set(const std::string& name);
std::string channel_set_name(ChannelSet set);
int condition_channels(ChannelSet set);
const std::vector<std::string>& slice_channel_order();

struct PreprocessOptions {
  Grid target_shape{64, 64, 16};
  int roi_dilation = 3;
};

struct PreprocessedSubject {
  std::string subject_id;
  std::vector<Volume> channels;  // slice_channel_order(), normalized to [-1, 1]
  Volume brain_mask;
  Volume labels;
  std::map<std::string, NormRecord> norms;  // keys: echo, qsm, r2star, t1w
  PadCropInfo pad;
};

/// Reads the nine volumes of one subject directory and applies the full
/// chain: pad/crop, brain mask from echo1 > 0, R2* refit from the echoes,
/// per-group normalization inside the mask with -1 outside, and ROI gating
/// of QSM and R2* (dilated deep gray matter masks, -1 outside).
PreprocessedSubject preprocess_subject(const std::filesystem::path& subject_dir,
                                       const std::string& subject_id,
                                       const PreprocessOptions& options);

/// [Z, 8, H, W] array of all channels. Throws DataError if any value leaves [-1, 1].
std::vector<float> subject_slice_array(const PreprocessedSubject& s);

struct ManifestEntry {
  std::string subject_id;
  int slice_index = 0;
  std::string split;  // "train" or "test"
  std::string file;   // relative to the work directory
  std::vector<std::string> channels;
  std::map<std::string, NormRecord> norms;
  std::uint32_t checksum = 0;  // crc32 of the subject's slice file
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::uint32_t file_crc32(const std::filesystem::path& path);

/// Training/sampling view: conditions [M, C, H, W] and targets [M, 1, H, W].
struct SliceDataset {
  Tensor<float> conditions;
  Tensor<float> targets;
  std::vector<std::string> subject_ids;
  std::vector<int> slice_indices;
  int size() const noexcept { return conditions.n(); }
};

/// Loads every slice of the given split ("" for all) with the first
/// `n_conditions` channels as conditions. Verifies checksums and channel order.
SliceDataset load_slices(const std::filesystem::path& work_dir,
                         const std::vector<ManifestEntry>& manifest, const std::string& split,
                         int n_conditions);
/// Ordered list of subjects in a split.
std::vector<std::string> manifest_subjects(const std::vector<ManifestEntry>& manifest,
                                           const std::string& split);

}  // namespace gresynth::data
