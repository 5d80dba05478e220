#include "gresynth/metrics/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "gresynth/error.hpp"
#include "gresynth/metrics/svg.hpp"

namespace gresynth::metrics {

using data::Volume;

const std::vector<Region>& evaluation_regions() {
  static const std::vector<Region> regions{
      {"cortex", {3, 42}},    {"white_matter", {2, 41}}, {"putamen", {12, 51}},
      {"pallidum", {13, 52}}, {"thalamus", {10, 49}},    {"caudate", {11, 50}},
      {"amygdala", {18, 54}}, {"hippocampus", {17, 53}}};
  return regions;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

IntensitySegmenter::IntensitySegmenter(const Volume& reference, const Volume& labels,
                                       const Volume& brain_mask, int prior_radius)
    : labels_(labels), mask_(brain_mask), radius_(prior_radius) {
  data::require_same_grid(reference, labels, "segmenter reference and labels");
  data::require_same_grid(reference, brain_mask, "segmenter reference and mask");
  if (prior_radius < 0) throw ParameterError("segmenter prior radius must be non-negative");
  std::map<int, std::pair<double, long>> acc;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const int l = static_cast<int>(std::lround(labels.data[i]));
    if (mask_.data[i] > 0.5f && l != 0) {
      auto& a = acc[l];
      a.first += reference.data[i];
      ++a.second;
    }
  }
  for (const auto& [l, a] : acc) means_[l] = a.first / static_cast<double>(a.second);
}

Volume IntensitySegmenter::segment(const Volume& image) const {
  data::require_same_grid(image, labels_, "segmented image");
  Volume out = image;
  out.modality = data::Modality::Labels;
  std::fill(out.data.begin(), out.data.end(), 0.0f);
  const int r = radius_;
  std::vector<int> candidates;
  for (int z = 0; z < image.nz; ++z)
    for (int y = 0; y < image.ny; ++y)
      for (int x = 0; x < image.nx; ++x) {
        const std::size_t i = image.index(x, y, z);
        if (mask_.data[i] <= 0.5f) continue;
        candidates.clear();
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int xx = x + dx, yy = y + dy, zz = z + dz;
              if (xx < 0 || yy < 0 || zz < 0 || xx >= image.nx || yy >= image.ny || zz >= image.nz)
                continue;
              const int l = static_cast<int>(std::lround(labels_.at(xx, yy, zz)));
              if (l != 0 && means_.contains(l)) candidates.push_back(l);
            }
        if (candidates.empty()) continue;
        std::sort(candidates.begin(), candidates.end());
        int best = candidates.front();
        double best_d = INFINITY;
        for (int l : candidates) {
          const double d = std::abs(static_cast<double>(image.data[i]) - means_.at(l));
          if (d < best_d) {
            best_d = d;
            best = l;
          }
        }
        out.data[i] = static_cast<float>(best);
      }
  return out;
}

namespace {

Volume region_mask(const Volume& seg, const Region& region) {
  Volume m = seg;
  m.modality = data::Modality::Mask;
  for (auto& v : m.data) {
    const int l = static_cast<int>(std::lround(v));
    v = std::find(region.labels.begin(), region.labels.end(), l) != region.labels.end() ? 1.0f : 0.0f;
  }
  return m;
}

double voxel_volume(const Volume& v) { return v.spacing[0] * v.spacing[1] * v.spacing[2]; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return NAN;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SubjectResult evaluate_subject(const std::string& subject_id, const Volume& gt, const Volume& gen,
                               const Volume& labels, const Volume& brain_mask,
                               const EvaluationOptions& opts) {
  data::require_same_grid(gt, gen, "subject " + subject_id + " synthesized volume");
  data::require_same_grid(gt, labels, "subject " + subject_id + " labels");
  data::require_same_grid(gt, brain_mask, "subject " + subject_id + " brain mask");
  SubjectResult r;
  r.subject_id = subject_id;
  r.slices = gt.nz;

  std::vector<SlicePair> pairs;
  const std::size_t plane = gt.slice_size();
  for (int z = 0; z < gt.nz; ++z) {
    SlicePair p{z, {}, {}};
    p.gt.assign(gt.data.begin() + static_cast<long>(z * plane), gt.data.begin() + static_cast<long>((z + 1) * plane));
    p.gen.assign(gen.data.begin() + static_cast<long>(z * plane), gen.data.begin() + static_cast<long>((z + 1) * plane));
    pairs.push_back(std::move(p));
  }
  pairs = slice_filter(std::move(pairs), opts.background);
  r.retained = static_cast<int>(pairs.size());
  std::vector<double> psnrs, ssims;
  for (const auto& p : pairs) {
    const double db = psnr(p.gt, p.gen, opts.max_value);
    if (is_infinite_psnr(db)) ++r.infinite_psnr;
    else psnrs.push_back(db);
    ssims.push_back(ssim(p.gt, p.gen, gt.ny, gt.nx, opts.ssim));
  }
  r.psnr = psnrs.empty() ? (r.infinite_psnr > 0 ? INFINITY : NAN) : mean_of(psnrs);
  r.ssim = mean_of(ssims);

  const IntensitySegmenter seg(gt, labels, brain_mask, opts.prior_radius);
  const Volume seg_gt = seg.segment(gt);
  const Volume seg_gen = seg.segment(gen);
  const double vox = voxel_volume(gt);
  for (const auto& region : evaluation_regions()) {
    const Volume a = region_mask(seg_gt, region);
    const Volume b = region_mask(seg_gen, region);
    RegionResult rr;
    rr.region = region.name;
    rr.dice = dice(a.data, b.data);
    rr.volume_gt = vox * std::count(a.data.begin(), a.data.end(), 1.0f);
    rr.volume_gen = vox * std::count(b.data.begin(), b.data.end(), 1.0f);
    rr.rve = rr.volume_gt > 0 ? relative_volume_error(rr.volume_gen, rr.volume_gt) : NAN;
    r.regions.push_back(rr);
  }
  return r;
}

MethodReport summarize(const std::string& method, std::vector<SubjectResult> subjects,
                       int correction_m) {
  MethodReport rep;
  rep.method = method;
  std::sort(subjects.begin(), subjects.end(),
            [](const SubjectResult& a, const SubjectResult& b) { return a.subject_id < b.subject_id; });
  rep.subjects = std::move(subjects);
  std::vector<double> ps, ss;
  for (const auto& s : rep.subjects) {
    if (std::isfinite(s.psnr)) ps.push_back(s.psnr);
    else if (std::isinf(s.psnr)) ++rep.psnr_infinite_subjects;
    ss.push_back(s.ssim);
  }
  rep.psnr_mean = ps.empty() && rep.psnr_infinite_subjects > 0 ? INFINITY : mean_of(ps);
  rep.psnr_sd = sd_of(ps);
  rep.ssim_mean = mean_of(ss);
  rep.ssim_sd = sd_of(ss);

  const int n = static_cast<int>(rep.subjects.size());
  for (std::size_t k = 0; k < evaluation_regions().size(); ++k) {
    RegionSummary rs;
    rs.region = evaluation_regions()[k].name;
    std::vector<double> ratings, gt, gen, dices, rves;
    for (const auto& s : rep.subjects) {
      const auto& r = s.regions[k];
      ratings.push_back(r.volume_gt);
      ratings.push_back(r.volume_gen);
      gt.push_back(r.volume_gt);
      gen.push_back(r.volume_gen);
      dices.push_back(r.dice.value);
      rves.push_back(r.rve);
    }
    rs.dice_mean = mean_of(dices);
    rs.rve_median = median_of(rves);
    if (n >= 2) {
      rs.icc = icc2k(ratings, n, 2);
      rs.icc_consistency = icc2k(ratings, n, 2, IccForm::Consistency);
    } else {
      rs.icc.degenerate = rs.icc_consistency.degenerate = true;
      rs.icc.value = rs.icc_consistency.value = NAN;
    }
    if (n >= 5) {
      rs.has_tests = true;
      rs.volume_tests = paired_tests(gen, gt, correction_m);
    }
    rep.regions.push_back(rs);
  }
  return rep;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::string f(double v) { return format_number(v); }

void write_test_columns(std::ofstream& out, const PairedTestReport& t) {
  out << t.n << ',' << f(t.mean_difference) << ',' << f(t.t) << ',' << f(t.t_p) << ','
      << f(t.w_plus) << ',' << f(t.wilcoxon_p) << ',' << (t.wilcoxon_exact ? "exact" : "normal") << ','
      << (t.wilcoxon_degenerate ? 1 : 0) << ',' << f(t.bonferroni_threshold) << ','
      << (t.t_significant_bonferroni ? 1 : 0) << ',' << (t.wilcoxon_significant_bonferroni ? 1 : 0);
}

const char* kTestHeader =
    "n,mean_difference,t,t_p,w_plus,wilcoxon_p,wilcoxon_method,wilcoxon_degenerate,"
    "bonferroni_threshold,t_significant_bonferroni,wilcoxon_significant_bonferroni";

}  // namespace

void write_method_report(const std::filesystem::path& dir, const MethodReport& rep, bool plots) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_csv(dir / "images.csv");
    out << "subject,psnr_db,ssim,slices,retained_slices,infinite_psnr_slices\n";
    for (const auto& s : rep.subjects)
      out << s.subject_id << ',' << f(s.psnr) << ',' << f(s.ssim) << ',' << s.slices << ','
          << s.retained << ',' << s.infinite_psnr << '\n';
  }
  {
    auto out = open_csv(dir / "regions.csv");
    out << "subject,region,dice,dice_degenerate,volume_gt_mm3,volume_gen_mm3,relative_volume_error_pct\n";
    for (const auto& s : rep.subjects)
      for (const auto& r : s.regions)
        out << s.subject_id << ',' << r.region << ',' << f(r.dice.value) << ','
            << (r.dice.degenerate ? 1 : 0) << ',' << f(r.volume_gt) << ',' << f(r.volume_gen) << ','
            << f(r.rve) << '\n';
  }
  {
    auto out = open_csv(dir / "metrics.csv");
    out << "subject,region,metric,value\n";
    for (const auto& s : rep.subjects) {
      out << s.subject_id << ",image,psnr_db," << f(s.psnr) << '\n';
      out << s.subject_id << ",image,ssim," << f(s.ssim) << '\n';
      for (const auto& r : s.regions) {
        out << s.subject_id << ',' << r.region << ",dice," << f(r.dice.value) << '\n';
        out << s.subject_id << ',' << r.region << ",volume_gt_mm3," << f(r.volume_gt) << '\n';
        out << s.subject_id << ',' << r.region << ",volume_gen_mm3," << f(r.volume_gen) << '\n';
        out << s.subject_id << ',' << r.region << ",relative_volume_error_pct," << f(r.rve) << '\n';
      }
    }
  }
  {
    auto out = open_csv(dir / "summary.csv");
    out << "region,dice_mean,icc2k,icc2k_degenerate,icc_consistency,rve_median_pct\n";
    for (const auto& r : rep.regions)
      out << r.region << ',' << f(r.dice_mean) << ',' << f(r.icc.value) << ','
          << (r.icc.degenerate ? 1 : 0) << ',' << f(r.icc_consistency.value) << ','
          << f(r.rve_median) << '\n';
  }
  {
    auto out = open_csv(dir / "tests.csv");
    out << "region,comparison," << kTestHeader << '\n';
    for (const auto& r : rep.regions) {
      if (!r.has_tests) continue;
      out << r.region << ",volume_gen_vs_gt,";
      write_test_columns(out, r.volume_tests);
      out << '\n';
    }
  }
  nlohmann::json j = {{"method", rep.method},
                      {"subjects", rep.subjects.size()},
                      {"psnr_mean", f(rep.psnr_mean)},
                      {"psnr_sd", f(rep.psnr_sd)},
                      {"psnr_infinite_subjects", rep.psnr_infinite_subjects},
                      {"ssim_mean", f(rep.ssim_mean)},
                      {"ssim_sd", f(rep.ssim_sd)}};
  for (const auto& r : rep.regions)
    j["regions"][r.region] = {{"dice_mean", f(r.dice_mean)}, {"icc2k", f(r.icc.value)},
                              {"rve_median", f(r.rve_median)}};
  {
    std::ofstream out(dir / "summary.json");
    out << j.dump(2) << '\n';
  }
  if (!plots) return;
  std::vector<double> ps, ss;
  for (const auto& s : rep.subjects) {
    ps.push_back(s.psnr);
    ss.push_back(s.ssim);
  }
  svg::write((dir / "psnr.svg").string(), svg::box_plot("PSNR per subject", "dB", {{rep.method, ps}}));
  svg::write((dir / "ssim.svg").string(), svg::box_plot("SSIM per subject", "SSIM", {{rep.method, ss}}));
  std::vector<std::string> cats;
  std::vector<double> dice_means, icc, rve;
  std::vector<svg::Series> rve_boxes;
  for (std::size_t k = 0; k < rep.regions.size(); ++k) {
    cats.push_back(rep.regions[k].region);
    dice_means.push_back(rep.regions[k].dice_mean);
    icc.push_back(rep.regions[k].icc.value);
    svg::Series s{rep.regions[k].region, {}};
    for (const auto& sub : rep.subjects) s.values.push_back(sub.regions[k].rve);
    rve_boxes.push_back(s);
  }
  svg::write((dir / "dice.svg").string(), svg::bar_chart("Mean Dice per region", "DSC", cats, {{rep.method, dice_means}}));
  svg::write((dir / "icc.svg").string(), svg::bar_chart("ICC(2,k) of regional volumes", "ICC", cats, {{rep.method, icc}}));
  svg::write((dir / "volume_error.svg").string(), svg::box_plot("Relative volume error", "%", rve_boxes));
}

void write_comparison(const std::filesystem::path& dir, const std::vector<MethodReport>& reports,
                      int correction_m, bool plots) {
  std::filesystem::create_directories(dir);
  auto out = open_csv(dir / "comparison.csv");
  out << "method_a,method_b,metric," << kTestHeader << '\n';
  for (std::size_t a = 0; a < reports.size(); ++a)
    for (std::size_t b = a + 1; b < reports.size(); ++b) {
      std::map<std::string, const SubjectResult*> other;
      for (const auto& s : reports[b].subjects) other[s.subject_id] = &s;
      std::vector<const SubjectResult*> sa, sb;
      for (const auto& s : reports[a].subjects)
        if (other.contains(s.subject_id)) {
          sa.push_back(&s);
          sb.push_back(other[s.subject_id]);
        }
      if (sa.size() < 5) continue;
      auto emit = [&](const std::string& metric, auto get) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < sa.size(); ++i) {
          x.push_back(get(*sa[i]));
          y.push_back(get(*sb[i]));
        }
        if (std::any_of(x.begin(), x.end(), [](double v) { return !std::isfinite(v); }) ||
            std::any_of(y.begin(), y.end(), [](double v) { return !std::isfinite(v); }))
          return;
        out << reports[a].method << ',' << reports[b].method << ',' << metric << ',';
        write_test_columns(out, paired_tests(x, y, correction_m));
        out << '\n';
      };
      emit("psnr_db", [](const SubjectResult& s) { return s.psnr; });
      emit("ssim", [](const SubjectResult& s) { return s.ssim; });
      for (std::size_t k = 0; k < evaluation_regions().size(); ++k)
        emit("dice_" + evaluation_regions()[k].name,
             [k](const SubjectResult& s) { return s.regions[k].dice.value; });
    }
  if (!plots) return;
  std::vector<svg::Series> ps, ss;
  std::vector<svg::Series> dice_bars;
  std::vector<std::string> cats;
  for (const auto& r : evaluation_regions()) cats.push_back(r.name);
  for (const auto& rep : reports) {
    svg::Series p{rep.method, {}}, s{rep.method, {}}, d{rep.method, {}};
    for (const auto& sub : rep.subjects) {
      p.values.push_back(sub.psnr);
      s.values.push_back(sub.ssim);
    }
    for (const auto& r : rep.regions) d.values.push_back(r.dice_mean);
    ps.push_back(p);
    ss.push_back(s);
    dice_bars.push_back(d);
  }
  svg::write((dir / "psnr.svg").string(), svg::box_plot("PSNR by method", "dB", ps));
  svg::write((dir / "ssim.svg").string(), svg::box_plot("SSIM by method", "SSIM", ss));
  svg::write((dir / "dice.svg").string(), svg::bar_chart("Mean Dice by region", "DSC", cats, dice_bars));
}

}  // namespace gresynth::metrics
