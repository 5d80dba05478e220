#pragma once
// Volume-level evaluation of synthesized T1w images: image quality on
// non-background slices, segmentation-derived overlap and volumes per
// region, agreement across subjects, and report/plot output.
//
// Segmentation uses a nearest-class-mean labeler: class means come from the
// reference image and its label map, and each brain voxel takes the label
// whose mean is closest among the labels found in its neighbourhood of the
// reference label map. The same labeler is applied to the reference and to
// the synthesized image, so a perfect synthesis reproduces it exactly.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gresynth/data/volume.hpp"
#include "gresynth/metrics/metrics.hpp"

namespace gresynth::metrics {

struct Region {
  std::string name;
  std::vector<int> labels;  // left and right codes
};
/// cortex, white_matter, putamen, pallidum, thalamus, caudate, amygdala, hippocampus.
const std::vector<Region>& evaluation_regions();

class IntensitySegmenter {
 public:
  IntensitySegmenter(const data::Volume& reference, const data::Volume& labels,
                     const data::Volume& brain_mask, int prior_radius = 1);
  data::Volume segment(const data::Volume& image) const;
  const std::map<int, double>& class_means() const noexcept { return means_; }

 private:
  const data::Volume& labels_;
  const data::Volume& mask_;
  int radius_;
  std::map<int, double> means_;
};

struct RegionResult {
  std::string region;
  DiceResult dice;
  double volume_gt = 0.0;   // mm^3
  double volume_gen = 0.0;  // mm^3
  double rve = 0.0;         // percent; NaN when the reference volume is zero
};

struct SubjectResult {
  std::string subject_id;
  double psnr = 0.0;  // mean over retained slices with finite PSNR; +inf if none finite
  double ssim = 0.0;  // mean over retained slices
  int slices = 0;
  int retained = 0;
  int infinite_psnr = 0;
  std::vector<RegionResult> regions;  // evaluation_regions() order
};

struct EvaluationOptions {
  double max_value = 2.0;  // PSNR peak for [-1, 1] images
  float background = -1.0f;
  SsimParams ssim;
  int prior_radius = 1;
};

/// gt and gen are normalized T1w volumes on the same grid.
SubjectResult evaluate_subject(const std::string& subject_id, const data::Volume& gt,
                               const data::Volume& gen, const data::Volume& labels,
                               const data::Volume& brain_mask, const EvaluationOptions& opts = {});

struct RegionSummary {
  std::string region;
  IccResult icc;
  IccResult icc_consistency;
  double dice_mean = 0.0;
  double rve_median = 0.0;
  bool has_tests = false;
  PairedTestReport volume_tests;  // GEN vs GT volumes across subjects
};

struct MethodReport {
  std::string method;
  std::vector<SubjectResult> subjects;
  std::vector<RegionSummary> regions;
  double psnr_mean = 0.0, psnr_sd = 0.0;
  double ssim_mean = 0.0, ssim_sd = 0.0;
  int psnr_infinite_subjects = 0;
};

MethodReport summarize(const std::string& method, std::vector<SubjectResult> subjects,
                       int correction_m);

/// images.csv, regions.csv, metrics.csv, summary.csv, tests.csv and
/// summary.json; with plots, image_quality.svg, dice.svg, volume_error.svg.
void write_method_report(const std::filesystem::path& dir, const MethodReport& report, bool plots);

/// Pairwise paired tests between methods on PSNR, SSIM and per-region Dice
/// over their common subjects: comparison.csv (and box plots).
void write_comparison(const std::filesystem::path& dir, const std::vector<MethodReport>& reports,
                      int correction_m, bool plots);

/// Compact number formatting used in every report ("inf", "nan" spelled out).
std::string format_number(double v);

}  // namespace gresynth::metrics
