#pragma once
// Per-ROI multiple linear regression of regional measures on age, sex and
// eTIV, effect sizes, and GT-vs-GEN concordance.
//
// Sex coding: female = 0, male = 1, so beta_sex is the male-minus-female
// adjusted difference. Cortical thickness measures are modeled without eTIV.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gresynth/error.hpp"

namespace gresynth::biostats {

class SingularDesignError : public DataError {
 public:
  using DataError::DataError;
};
class SampleSizeError : public DataError {
 public:
  using DataError::DataError;
};
class GroupError : public DataError {
 public:
  using DataError::DataError;
};
class PairingError : public DataError {
 public:
  using DataError::DataError;
};
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

enum class Source { GT, GEN };
std::string source_name(Source s);

struct SubjectRecord {
  std::string subject_id;
  double age = 0.0;   // years
  int sex = 0;        // 0 female, 1 male
  double etiv = 0.0;  // mm^3
  Source source = Source::GT;
  std::map<std::string, double> measures;  // ROI name -> mm^3 or mm
};

/// Amygdala, Caudate, Hippocampus, Pallidum, Putamen, Thalamus, Cerebral
/// Cortex, Cerebral White Matter, Mean Cortical Thickness.
const std::vector<std::string>& default_rois();
/// True for thickness measures, which are modeled without eTIV.
bool is_thickness_roi(const std::string& roi);

/// CSV with columns subject_id, age, sex, etiv, source, then one column per
/// ROI. sex accepts 0/1 or F/M; source GT or GEN. SchemaError on violations.
std::vector<SubjectRecord> read_subject_table(const std::filesystem::path& path);
void write_subject_table(const std::filesystem::path& path, const std::vector<SubjectRecord>& records,
                         const std::vector<std::string>& rois);
/// ROI columns of a table: the default ROIs present, then any others by name.
std::vector<std::string> table_rois(const std::vector<SubjectRecord>& records);

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t = 0.0;
  double p = 1.0;  // two-sided
};

struct RegressionResult {
  std::string roi;
  int n = 0;
  bool include_etiv = true;
  std::vector<Coefficient> coefficients;  // intercept, age, sex[, etiv]
  double r2 = 0.0;
  double adj_r2 = 0.0;
  std::vector<double> residuals;
  double cohen_f_age = 0.0;
  double cohen_d_sex = 0.0;

  /// Coefficient by name ("intercept", "age", "sex", "etiv"); DataError if absent.
  const Coefficient& coef(const std::string& name) const;
};

/// OLS of y on [1, predictors...] via column-pivoted QR. Throws
/// SampleSizeError unless n > predictors + 1, SingularDesignError if rank deficient.
RegressionResult fit_ols(const std::vector<std::vector<double>>& predictors,
                         const std::vector<std::string>& names, const std::vector<double>& y);

/// Y_roi = b0 + b_age Age + b_sex Sex [+ b_etiv eTIV] + e.
RegressionResult fit_mlr(const std::vector<SubjectRecord>& records, const std::string& roi,
                         bool include_etiv);

/// sqrt((R2_full - R2_reduced) / (1 - R2_full)); +infinity when R2_full = 1.
double cohens_f(double r2_full, double r2_reduced);
double cohens_f_age(const RegressionResult& full, const RegressionResult& reduced);

/// (mean_M - mean_F) / pooled SD of the residuals of y regressed on the
/// covariates (age, plus eTIV when include_etiv). GroupError when a sex
/// has fewer than two subjects.
double cohens_d_sex(const std::vector<SubjectRecord>& records, const std::string& roi,
                    bool include_etiv);

/// Full model plus the age-free reduced model; fills cohen_f_age and cohen_d_sex.
RegressionResult analyze_roi(const std::vector<SubjectRecord>& records, const std::string& roi);

struct ConcordanceRow {
  std::string roi;
  const RegressionResult* gt = nullptr;
  const RegressionResult* gen = nullptr;
  bool beta_age_sign_agrees = false;
  std::map<std::string, double> delta;      // gen - gt per statistic
  std::map<std::string, double> rel_delta;  // (gen - gt) / |gt|
};

/// Rows point into gt/gen, so the report is move-only.
struct ConcordanceReport {
  ConcordanceReport() = default;
  ConcordanceReport(ConcordanceReport&&) = default;
  ConcordanceReport& operator=(ConcordanceReport&&) = default;
  ConcordanceReport(const ConcordanceReport&) = delete;
  ConcordanceReport& operator=(const ConcordanceReport&) = delete;

  std::vector<RegressionResult> gt;
  std::vector<RegressionResult> gen;
  std::vector<ConcordanceRow> rows;
  int sign_agreement = 0;
  double rank_correlation_f_age = 0.0;  // Spearman across ROIs
  double rank_correlation_d_sex = 0.0;
};

/// Statistic names compared per ROI.
const std::vector<std::string>& concordance_statistics();
double statistic(const RegressionResult& r, const std::string& name);

/// Pairs results by ROI (PairingError if the ROI sets differ).
ConcordanceReport concordance_report(std::vector<RegressionResult> gt, std::vector<RegressionResult> gen);

/// regression.csv (ROI, source, adj R2, beta/p/f age, beta/p/d sex), concordance.csv
/// (per-ROI deltas) and summary.json.
void write_concordance(const std::filesystem::path& dir, const ConcordanceReport& report);

/// Spearman rank correlation (average ranks for ties); NaN without variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct RoiModel {
  std::string roi;
  double intercept;
  double beta_age;
  double beta_sex;
  double beta_etiv;  // ignored for thickness
  double noise_sd;
};
/// Planted per-ROI effects with age slopes and sex offsets of the magnitudes
/// seen in healthy aging cohorts.
const std::vector<RoiModel>& default_cohort_model();
/// Simulated GT cohort: age uniform on [20, 80], sex Bernoulli(1/2), eTIV
/// normal with a male offset, each ROI drawn from its linear model.
std::vector<SubjectRecord> simulate_cohort(int n, std::uint64_t seed,
                                           const std::vector<RoiModel>& model = default_cohort_model());
/// GEN copy of a cohort with multiplicative N(1, relative_sd) noise per measure.
std::vector<SubjectRecord> perturb_cohort(const std::vector<SubjectRecord>& gt, double relative_sd,
                                          std::uint64_t seed);

}  // namespace gresynth::biostats
