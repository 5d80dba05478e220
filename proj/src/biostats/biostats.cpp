#include "gresynth/biostats/biostats.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gresynth::biostats {

std::string source_name(Source s) { return s == Source::GT ? "GT" : "GEN"; }

const std::vector<std::string>& default_rois() {
  static const std::vector<std::string> rois{
      "Amygdala", "Caudate",         "Hippocampus",           "Pallidum",
      "Putamen",  "Thalamus",        "Cerebral Cortex",       "Cerebral White Matter",
      "Mean Cortical Thickness"};
  return rois;
}

bool is_thickness_roi(const std::string& roi) {
  std::string lower(roi);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.find("thickness") != std::string::npos;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(where + ": '" + s + "' is not a number");
  }
}

}  // namespace

std::vector<SubjectRecord> read_subject_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open subject table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + " is empty");
  const auto header = split_csv(line);
  const std::vector<std::string> fixed{"subject_id", "age", "sex", "etiv", "source"};
  if (header.size() < fixed.size() + 1 || !std::equal(fixed.begin(), fixed.end(), header.begin()))
    throw SchemaError(path.string() +
                      ": header must start with subject_id,age,sex,etiv,source followed by ROI columns");
  std::vector<SubjectRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    const std::string where = path.filename().string() + " row " + std::to_string(row);
    if (cells.size() != header.size())
      throw SchemaError(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                        std::to_string(cells.size()));
    SubjectRecord r;
    r.subject_id = cells[0];
    r.age = parse_number(cells[1], where);
    if (cells[2] == "0" || cells[2] == "F" || cells[2] == "f") r.sex = 0;
    else if (cells[2] == "1" || cells[2] == "M" || cells[2] == "m") r.sex = 1;
    else throw SchemaError(where + ": sex must be 0/1 or F/M");
    r.etiv = parse_number(cells[3], where);
    if (cells[4] == "GT") r.source = Source::GT;
    else if (cells[4] == "GEN") r.source = Source::GEN;
    else throw SchemaError(where + ": source must be GT or GEN");
    if (!(r.age > 0)) throw SchemaError(where + ": age must be positive");
    if (!(r.etiv > 0)) throw SchemaError(where + ": eTIV must be positive");
    for (std::size_t c = fixed.size(); c < header.size(); ++c) {
      const double v = parse_number(cells[c], where);
      if (!(v >= 0)) throw SchemaError(where + ": " + header[c] + " must be non-negative");
      r.measures[header[c]] = v;
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw SchemaError(path.string() + " has no subjects");
  return records;
}

std::vector<std::string> table_rois(const std::vector<SubjectRecord>& records) {
  std::vector<std::string> rois;
  if (records.empty()) return rois;
  // Preferred order is the canonical ROI list; any others follow alphabetically.
  for (const auto& r : default_rois())
    if (records.front().measures.contains(r)) rois.push_back(r);
  for (const auto& [k, v] : records.front().measures)
    if (std::find(rois.begin(), rois.end(), k) == rois.end()) rois.push_back(k);
  return rois;
}

void write_subject_table(const std::filesystem::path& path, const std::vector<SubjectRecord>& records,
                         const std::vector<std::string>& rois) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subject_id,age,sex,etiv,source";
  for (const auto& r : rois) out << ',' << r;
  out << '\n';
  char buf[48];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  for (const auto& r : records) {
    out << r.subject_id << ',' << num(r.age) << ',' << r.sex << ',' << num(r.etiv) << ','
        << source_name(r.source);
    for (const auto& roi : rois) out << ',' << num(r.measures.at(roi));
    out << '\n';
  }
}

const Coefficient& RegressionResult::coef(const std::string& name) const {
  for (const auto& c : coefficients)
    if (c.name == name) return c;
  throw DataError("regression for " + roi + " has no coefficient '" + name + "'");
}

RegressionResult fit_ols(const std::vector<std::vector<double>>& predictors,
                         const std::vector<std::string>& names, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto p = static_cast<Eigen::Index>(predictors.size()) + 1;
  if (names.size() != predictors.size()) throw ParameterError("one name per predictor is required");
  if (n <= p)
    throw SampleSizeError("regression needs more than " + std::to_string(p) + " subjects, got " +
                          std::to_string(n));
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    Y(i) = y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 1; j < p; ++j) {
      const auto& col = predictors[static_cast<std::size_t>(j - 1)];
      if (col.size() != y.size()) throw ShapeError("predictor length differs from the response");
      X(i, j) = col[static_cast<std::size_t>(i)];
    }
  }
  // Scale columns so the rank test is insensitive to units (eTIV is ~1e6).
  Eigen::VectorXd scale = X.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (scale(j) == 0.0) throw SingularDesignError("design column '" + (j == 0 ? std::string("intercept") : names[static_cast<std::size_t>(j - 1)]) + "' is all zeros");
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw SingularDesignError("design matrix is rank deficient");
  const Eigen::VectorXd bs = qr.solve(Y);
  const Eigen::VectorXd beta = bs.cwiseQuotient(scale);

  const Eigen::VectorXd resid = Y - X * beta;
  const double rss = resid.squaredNorm();
  const double mean = Y.mean();
  const double tss = (Y.array() - mean).square().sum();
  if (tss == 0.0) throw DataError("response is constant; R^2 is undefined");

  RegressionResult r;
  r.n = static_cast<int>(n);
  r.r2 = 1.0 - rss / tss;
  const double k = static_cast<double>(p - 1);
  r.adj_r2 = 1.0 - (1.0 - r.r2) * (static_cast<double>(n) - 1.0) / (static_cast<double>(n) - k - 1.0);
  r.residuals.assign(resid.data(), resid.data() + n);

  // (Xs'Xs)^-1 = P R^-1 R^-T P'.
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd cov_perm = Rinv * Rinv.transpose();
  const auto perm = qr.colsPermutation();
  const Eigen::MatrixXd cov_s = perm * cov_perm * perm.transpose();
  const double df = static_cast<double>(n - p);
  const double sigma2 = rss / df;
  const boost::math::students_t tdist(df);
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.name = j == 0 ? "intercept" : names[static_cast<std::size_t>(j - 1)];
    c.estimate = beta(j);
    c.std_error = std::sqrt(sigma2 * cov_s(j, j)) / scale(j);
    if (c.std_error == 0.0) {
      c.t = c.estimate == 0.0 ? 0.0 : std::copysign(INFINITY, c.estimate);
      c.p = c.estimate == 0.0 ? 1.0 : 0.0;
    } else {
      c.t = c.estimate / c.std_error;
      c.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(c.t))));
    }
    r.coefficients.push_back(c);
  }
  return r;
}

namespace {

struct Columns {
  std::vector<double> y, age, sex, etiv;
};

Columns gather(const std::vector<SubjectRecord>& records, const std::string& roi) {
  Columns c;
  for (const auto& r : records) {
    const auto it = r.measures.find(roi);
    if (it == r.measures.end()) throw SchemaError("subject " + r.subject_id + " has no " + roi + " value");
    c.y.push_back(it->second);
    c.age.push_back(r.age);
    c.sex.push_back(r.sex);
    c.etiv.push_back(r.etiv);
  }
  return c;
}

}  // namespace

RegressionResult fit_mlr(const std::vector<SubjectRecord>& records, const std::string& roi,
                         bool include_etiv) {
  const Columns c = gather(records, roi);
  RegressionResult r = include_etiv ? fit_ols({c.age, c.sex, c.etiv}, {"age", "sex", "etiv"}, c.y)
                                    : fit_ols({c.age, c.sex}, {"age", "sex"}, c.y);
  r.roi = roi;
  r.include_etiv = include_etiv;
  return r;
}

double cohens_f(double r2_full, double r2_reduced) {
  if (r2_full >= 1.0) return INFINITY;
  const double f2 = (r2_full - r2_reduced) / (1.0 - r2_full);
  return std::sqrt(std::max(0.0, f2));
}

double cohens_f_age(const RegressionResult& full, const RegressionResult& reduced) {
  return cohens_f(full.r2, reduced.r2);
}

double cohens_d_sex(const std::vector<SubjectRecord>& records, const std::string& roi,
                    bool include_etiv) {
  const Columns c = gather(records, roi);
  const RegressionResult adj = include_etiv ? fit_ols({c.age, c.etiv}, {"age", "etiv"}, c.y)
                                            : fit_ols({c.age}, {"age"}, c.y);
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int s = records[i].sex;
    sum[s] += adj.residuals[i];
    ++count[s];
  }
  if (count[0] < 2 || count[1] < 2)
    throw GroupError("Cohen's d for " + roi + " needs at least two subjects of each sex");
  const double mean[2] = {sum[0] / count[0], sum[1] / count[1]};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int s = records[i].sex;
    sq[s] += (adj.residuals[i] - mean[s]) * (adj.residuals[i] - mean[s]);
  }
  const double pooled = std::sqrt((sq[0] + sq[1]) / (count[0] + count[1] - 2));
  if (pooled == 0.0) return mean[1] == mean[0] ? 0.0 : std::copysign(INFINITY, mean[1] - mean[0]);
  return (mean[1] - mean[0]) / pooled;
}

RegressionResult analyze_roi(const std::vector<SubjectRecord>& records, const std::string& roi) {
  const bool etiv = !is_thickness_roi(roi);
  RegressionResult full = fit_mlr(records, roi, etiv);
  const Columns c = gather(records, roi);
  const RegressionResult reduced =
      etiv ? fit_ols({c.sex, c.etiv}, {"sex", "etiv"}, c.y) : fit_ols({c.sex}, {"sex"}, c.y);
  full.cohen_f_age = cohens_f_age(full, reduced);
  full.cohen_d_sex = cohens_d_sex(records, roi, etiv);
  return full;
}

const std::vector<std::string>& concordance_statistics() {
  static const std::vector<std::string> s{"adj_r2", "beta_age", "p_age", "f_age",
                                          "beta_sex", "p_sex",    "d_sex"};
  return s;
}

double statistic(const RegressionResult& r, const std::string& name) {
  if (name == "adj_r2") return r.adj_r2;
  if (name == "beta_age") return r.coef("age").estimate;
  if (name == "p_age") return r.coef("age").p;
  if (name == "f_age") return r.cohen_f_age;
  if (name == "beta_sex") return r.coef("sex").estimate;
  if (name == "p_sex") return r.coef("sex").p;
  if (name == "d_sex") return r.cohen_d_sex;
  throw ParameterError("unknown regression statistic '" + name + "'");
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: samples differ in length");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
      i = j + 1;
    }
    return r;
  };
  if (a.size() < 2) return NAN;
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return NAN;
  return sab / std::sqrt(saa * sbb);
}

ConcordanceReport concordance_report(std::vector<RegressionResult> gt, std::vector<RegressionResult> gen) {
  ConcordanceReport rep;
  rep.gt = std::move(gt);
  rep.gen = std::move(gen);
  if (rep.gt.size() != rep.gen.size())
    throw PairingError("GT has " + std::to_string(rep.gt.size()) + " ROIs, GEN has " +
                       std::to_string(rep.gen.size()));
  std::vector<double> fg, fn, dg, dn;
  for (const auto& g : rep.gt) {
    const auto it = std::find_if(rep.gen.begin(), rep.gen.end(),
                                 [&](const RegressionResult& r) { return r.roi == g.roi; });
    if (it == rep.gen.end()) throw PairingError("ROI '" + g.roi + "' has no GEN counterpart");
    ConcordanceRow row;
    row.roi = g.roi;
    row.gt = &g;
    row.gen = &*it;
    const double ba = statistic(g, "beta_age"), bb = statistic(*it, "beta_age");
    row.beta_age_sign_agrees = (ba > 0) == (bb > 0) && (ba < 0) == (bb < 0);
    for (const auto& s : concordance_statistics()) {
      const double x = statistic(g, s), y = statistic(*it, s);
      row.delta[s] = y - x;
      row.rel_delta[s] = x != 0 ? (y - x) / std::abs(x) : NAN;
    }
    rep.sign_agreement += row.beta_age_sign_agrees;
    fg.push_back(g.cohen_f_age);
    fn.push_back(it->cohen_f_age);
    dg.push_back(g.cohen_d_sex);
    dn.push_back(it->cohen_d_sex);
    rep.rows.push_back(std::move(row));
  }
  rep.rank_correlation_f_age = spearman(fg, fn);
  rep.rank_correlation_d_sex = spearman(dg, dn);
  return rep;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_concordance(const std::filesystem::path& dir, const ConcordanceReport& rep) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "regression.csv");
    if (!out) throw DataError("cannot write " + (dir / "regression.csv").string());
    out << "roi,source,adj_r2,beta_age,p_age,f_age,beta_sex,p_sex,d_sex\n";
    for (const auto& row : rep.rows)
      for (const auto* r : {row.gt, row.gen}) {
        out << '"' << row.roi << "\"," << (r == row.gt ? "GT" : "GEN");
        for (const auto& s : concordance_statistics()) out << ',' << fmt(statistic(*r, s));
        out << '\n';
      }
  }
  {
    std::ofstream out(dir / "concordance.csv");
    out << "roi,beta_age_sign_agrees";
    for (const auto& s : concordance_statistics()) out << ",delta_" << s << ",rel_delta_" << s;
    out << '\n';
    for (const auto& row : rep.rows) {
      out << '"' << row.roi << "\"," << (row.beta_age_sign_agrees ? 1 : 0);
      for (const auto& s : concordance_statistics())
        out << ',' << fmt(row.delta.at(s)) << ',' << fmt(row.rel_delta.at(s));
      out << '\n';
    }
  }
  nlohmann::json j = {{"rois", rep.rows.size()},
                      {"beta_age_sign_agreement", rep.sign_agreement},
                      {"rank_correlation_f_age", fmt(rep.rank_correlation_f_age)},
                      {"rank_correlation_d_sex", fmt(rep.rank_correlation_d_sex)}};
  for (const auto& row : rep.rows) {
    auto& e = j["per_roi"][row.roi];
    e["include_etiv"] = row.gt->include_etiv;
    e["n_gt"] = row.gt->n;
    e["n_gen"] = row.gen->n;
    for (const auto& s : concordance_statistics()) {
      e["gt"][s] = fmt(statistic(*row.gt, s));
      e["gen"][s] = fmt(statistic(*row.gen, s));
    }
  }
  std::ofstream out(dir / "summary.json");
  out << j.dump(2) << '\n';
}

const std::vector<RoiModel>& default_cohort_model() {
  // Typical value at age 50 (female, eTIV 1.45e6) followed by slopes and noise.
  struct Row {
    const char* roi;
    double typical, age, sex, etiv, noise;
  };
  static const Row rows[] = {
      {"Amygdala", 3200, -6.182, 309.2, 0.0010, 300},
      {"Caudate", 7000, -12.81, 6.314, 0.0025, 700},
      {"Hippocampus", 8000, -14.66, 486.1, 0.0025, 600},
      {"Pallidum", 3800, -7.836, 83.97, 0.0012, 300},
      {"Putamen", 9500, -29.02, 424.1, 0.0030, 700},
      {"Thalamus", 14000, -51.36, 1270, 0.0045, 1000},
      {"Cerebral Cortex", 450000, -1293, 16650, 0.15, 20000},
      {"Cerebral White Matter", 450000, -616.9, 15240, 0.15, 30000},
      {"Mean Cortical Thickness", 2.5, -0.0030, -0.0074, 0.0, 0.08},
  };
  static const std::vector<RoiModel> model = [] {
    std::vector<RoiModel> m;
    for (const auto& r : rows) {
      const double etiv = is_thickness_roi(r.roi) ? 0.0 : r.etiv;
      m.push_back({r.roi, r.typical - r.age * 50.0 - etiv * 1.45e6, r.age, r.sex, etiv, r.noise});
    }
    return m;
  }();
  return model;
}

std::vector<SubjectRecord> simulate_cohort(int n, std::uint64_t seed, const std::vector<RoiModel>& model) {
  if (n < 1) throw ParameterError("cohort size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> age(20.0, 80.0);
  std::bernoulli_distribution male(0.5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<SubjectRecord> out;
  for (int i = 0; i < n; ++i) {
    SubjectRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "sim-%04d", i + 1);
    r.subject_id = id;
    r.age = age(rng);
    r.sex = male(rng) ? 1 : 0;
    r.etiv = std::max(8e5, 1.40e6 + 0.12e6 * r.sex + 0.10e6 * z(rng));
    for (const auto& m : model) {
      const double etiv = is_thickness_roi(m.roi) ? 0.0 : m.beta_etiv * r.etiv;
      const double v = m.intercept + m.beta_age * r.age + m.beta_sex * r.sex + etiv + m.noise_sd * z(rng);
      r.measures[m.roi] = std::max(0.0, v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SubjectRecord> perturb_cohort(const std::vector<SubjectRecord>& gt, double relative_sd,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<SubjectRecord> out = gt;
  for (auto& r : out) {
    r.source = Source::GEN;
    for (auto& [roi, v] : r.measures) v = std::max(0.0, v * (1.0 + relative_sd * z(rng)));
  }
  return out;
}

}  // namespace gresynth::biostats
