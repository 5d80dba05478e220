#pragma once
// Procedural multi-contrast head phantom: an ellipsoidal brain with a cortical
// shell and white-matter interior, split into hemispheres, holding bilateral
// pairs of deep gray matter structures. Each tissue class carries (S0, R2*,
// susceptibility, T1w intensity) with per-subject jitter; R2* is modulated
// by a smooth low-frequency field. Echo magnitudes follow S0 exp(-TE R2*),
// and T1w is t1w_intensity(class, R2*).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gresynth/data/volume.hpp"

namespace gresynth::data {

struct PhantomConfig {
  int grid_size = 64;    // in-plane matrix (nx = ny)
  int depth = 16;        // axial slices
  int n_structures = 7;  // deep gray matter structure types, each placed bilaterally
};

struct TissueClass {
  std::string name;
  int left_code;
  int right_code;
  double s0;      // proton-density-like amplitude
  double r2star;  // 1/ms
  double chi;     // ppm
  double t1;      // T1w intensity before the R2* term
};

/// Tissue table: white matter, cortex, then the deep structures in placement order.
const std::vector<TissueClass>& tissue_classes();
/// Echo times of the five-echo acquisition, ms.
const std::vector<double>& echo_times_ms();
/// Slope of T1w intensity in R2* (ms).
constexpr double kT1wR2starSlope = 2.0;
/// T1w intensity for tissue class index `cls` at local R2* (1/ms).
double t1w_intensity(std::size_t cls, double r2star);

struct Phantom {
  std::vector<Volume> echoes;  // five, ascending TE
  Volume qsm;
  Volume r2star;
  Volume t1w;
  Volume labels;
  Volume brain_mask;
};

/// Deterministic in (seed, config). Throws ParameterError when grid_size < 32,
/// depth < 4, or the structures cannot be packed.
Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& config);

/// File names written per subject directory, in order.
const std::vector<std::string>& phantom_file_names();
void write_phantom(const std::filesystem::path& dir, const Phantom& p);

/// Independent per-subject seed derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace gresynth::data
