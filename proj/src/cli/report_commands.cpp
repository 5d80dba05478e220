#include <algorithm>

#include "gresynth/biostats/biostats.hpp"
#include "gresynth/cli/commands.hpp"
#include "gresynth/cli/worker_pool.hpp"
#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"
#include "gresynth/log.hpp"
#include "gresynth/metrics/evaluation.hpp"

namespace gresynth::cli {

void cmd_evaluate(const RunConfig& cfg, const CommandOptions&) {
  if (cfg.evaluate.methods.empty()) throw ConfigError("evaluate.methods is empty");
  std::vector<metrics::MethodReport> reports;
  for (const auto& name : cfg.evaluate.methods) {
    const fs::path root = cfg.paths.output_dir / name;
    if (!fs::is_directory(root)) throw DataError("no synthesized volumes in " + root.string());
    std::vector<std::string> subjects;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && fs::exists(e.path() / "t1w_norm.nii"))
        subjects.push_back(e.path().filename().string());
    std::sort(subjects.begin(), subjects.end());
    if (subjects.empty()) throw DataError("no synthesized volumes in " + root.string());

    std::vector<metrics::SubjectResult> results(subjects.size());
    parallel_for(static_cast<int>(subjects.size()), worker_count(), [&](int i) {
      const std::string& sid = subjects[static_cast<std::size_t>(i)];
      const fs::path ref = cfg.paths.work_dir / "reference" / sid;
      if (!fs::exists(ref / "t1w_norm.nii"))
        throw DataError("synthesized subject " + sid + " has no reference volume in " + ref.string());
      results[static_cast<std::size_t>(i)] = metrics::evaluate_subject(
          sid, io::read_nifti(ref / "t1w_norm.nii"), io::read_nifti(root / sid / "t1w_norm.nii"),
          io::read_nifti(ref / "labels.nii"), io::read_nifti(ref / "brain_mask.nii"));
    });
    reports.push_back(metrics::summarize(name, std::move(results), cfg.evaluate.correction_m));
    metrics::write_method_report(root / "report", reports.back(), cfg.evaluate.plots);
    info(name + ": PSNR " + metrics::format_number(reports.back().psnr_mean) + " dB, SSIM " +
         metrics::format_number(reports.back().ssim_mean));
  }
  if (reports.size() > 1)
    metrics::write_comparison(cfg.paths.output_dir / "comparison", reports, cfg.evaluate.correction_m,
                              cfg.evaluate.plots);
}

namespace {

std::vector<biostats::SubjectRecord> load_table(const fs::path& path, biostats::Source expected,
                                                const char* key) {
  if (path.empty()) throw ConfigError("biostats." + std::string(key) + " is not set");
  if (!fs::exists(path)) throw DataError("subject table " + path.string() + " does not exist");
  auto records = biostats::read_subject_table(path);
  for (const auto& r : records)
    if (r.source != expected)
      throw biostats::SchemaError(path.filename().string() + ": subject " + r.subject_id +
                                  " is labelled " + biostats::source_name(r.source) + ", expected " +
                                  biostats::source_name(expected));
  return records;
}

}  // namespace

void cmd_biostats(const RunConfig& cfg, const CommandOptions&) {
  const auto gt = load_table(cfg.biostats.gt_table, biostats::Source::GT, "gt_table");
  const auto gen = load_table(cfg.biostats.gen_table, biostats::Source::GEN, "gen_table");
  const auto rois = biostats::table_rois(gt);
  auto gen_rois = biostats::table_rois(gen);
  if (rois != gen_rois) throw biostats::PairingError("GT and GEN tables list different ROI columns");

  std::vector<biostats::RegressionResult> gt_fits(rois.size()), gen_fits(rois.size());
  parallel_for(static_cast<int>(rois.size()), worker_count(), [&](int i) {
    const auto k = static_cast<std::size_t>(i);
    gt_fits[k] = biostats::analyze_roi(gt, rois[k]);
    gen_fits[k] = biostats::analyze_roi(gen, rois[k]);
  });
  const auto report = biostats::concordance_report(std::move(gt_fits), std::move(gen_fits));
  biostats::write_concordance(cfg.paths.output_dir / "biostats", report);
  info("biostats: beta_age sign agreement " + std::to_string(report.sign_agreement) + "/" +
       std::to_string(report.rows.size()));
}

}  // namespace gresynth::cli
