#pragma once
// Image-quality, overlap, agreement and paired-test statistics.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace gresynth::metrics {

/// 10 log10(max_value^2 / MSE). Identical inputs give +infinity.
double psnr(std::span<const float> ref, std::span<const float> test, double max_value);
bool is_infinite_psnr(double db);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;  // L; images in [-1, 1]
};

/// Mean SSIM over every fully contained window position (no padding).
/// ParameterError if the image is smaller than the window.
double ssim(std::span<const float> ref, std::span<const float> test, int height, int width,
            const SsimParams& p = {});
/// Normalized 1D Gaussian used by ssim (the 2D window is its outer product).
std::vector<double> gaussian_window(int size, double sigma);

struct DiceResult {
  double value = 0.0;
  bool degenerate = false;  // both masks empty
};
/// 2|G and S| / (|G| + |S|). Values must be 0 or 1 (DataError otherwise).
DiceResult dice(std::span<const float> g, std::span<const float> s);

struct IccResult {
  double value = 0.0;
  bool degenerate = false;  // no between-subject variance
  double ms_rows = 0.0, ms_cols = 0.0, ms_error = 0.0;
};
enum class IccForm { AbsoluteAgreement, Consistency };
/// Two-way ANOVA on a subjects x raters matrix (row-major, n rows, k columns).
/// Absolute agreement: (MSR - MSE) / (MSR + (MSC - MSE) / n).
/// Consistency: (MSR - MSE) / MSR.
IccResult icc2k(std::span<const double> ratings, int n, int k,
                IccForm form = IccForm::AbsoluteAgreement);

/// (v_model - v_gt) / v_gt x 100. DataError when v_gt <= 0.
double relative_volume_error(double v_model, double v_gt);

struct PairedTestReport {
  int n = 0;
  double mean_difference = 0.0;  // mean(a - b)
  double t = 0.0;
  double t_df = 0.0;
  double t_p = 1.0;  // two-sided
  double w_plus = 0.0;  // sum of ranks of positive differences
  double wilcoxon_p = 1.0;  // two-sided
  double wilcoxon_p_greater = 1.0;  // alternative: a > b
  double wilcoxon_p_less = 1.0;
  bool wilcoxon_exact = false;
  bool wilcoxon_degenerate = false;  // every difference is zero
  int wilcoxon_zeros = 0;  // zero differences dropped
  double threshold = 0.05;
  double bonferroni_threshold = 0.05;
  bool t_significant = false, t_significant_bonferroni = false;
  bool wilcoxon_significant = false, wilcoxon_significant_bonferroni = false;
};

/// Largest n for which the Wilcoxon distribution is enumerated exactly.
constexpr int kWilcoxonExactMax = 25;

/// Paired t-test and Wilcoxon signed-rank test on a - b. Requires equal
/// lengths of at least 5. Zero differences are dropped for Wilcoxon; tied
/// magnitudes get average ranks (exact enumeration uses those ranks).
PairedTestReport paired_tests(std::span<const double> a, std::span<const double> b,
                              int correction_m, double alpha = 0.05);
double bonferroni_threshold(int m, double alpha = 0.05);

/// Upper-tail probability P(W+ >= w) under the null for the given ranks, by
/// enumerating all sign assignments (doubled ranks keep ties exact).
double wilcoxon_exact_upper(const std::vector<double>& ranks, double w);

struct SlicePair {
  int index = 0;
  std::vector<float> gt;
  std::vector<float> gen;
};
/// Drops pairs whose ground truth is entirely `background`.
std::vector<SlicePair> slice_filter(std::vector<SlicePair> pairs, float background = -1.0f);
bool is_background_only(std::span<const float> slice, float background = -1.0f);

}  // namespace gresynth::metrics
