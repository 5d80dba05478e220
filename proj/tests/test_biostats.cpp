#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "gresynth/biostats/biostats.hpp"
#include "gresynth/error.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gresynth;
using namespace gresynth::biostats;

namespace {

const std::string kThick = "Mean Cortical Thickness";

std::vector<SubjectRecord> design(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> age(20, 80);
  std::normal_distribution<double> etiv(1.45e6, 0.12e6);
  std::vector<SubjectRecord> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& r = out[static_cast<std::size_t>(i)];
    r.subject_id = "s" + std::to_string(i);
    r.age = age(rng);
    r.sex = i % 2;
    r.etiv = etiv(rng);
  }
  return out;
}

struct Cols {
  std::vector<double> age, sex, etiv, y;
};
Cols columns(const std::vector<SubjectRecord>& rs, const std::string& roi) {
  Cols c;
  for (const auto& r : rs) {
    c.age.push_back(r.age);
    c.sex.push_back(r.sex);
    c.etiv.push_back(r.etiv);
    c.y.push_back(r.measures.at(roi));
  }
  return c;
}

}  // namespace

TEST_CASE("noise-free planted coefficients are recovered") {
  auto rs = design(40, 1);
  for (auto& r : rs) r.measures["Y"] = 5 - 2 * r.age + 3 * r.sex + 0.001 * r.etiv;
  const auto fit = fit_mlr(rs, "Y", true);
  CHECK(std::abs(fit.coef("intercept").estimate - 5) < 1e-8);
  CHECK(std::abs(fit.coef("age").estimate + 2) < 1e-8);
  CHECK(std::abs(fit.coef("sex").estimate - 3) < 1e-8);
  CHECK(std::abs(fit.coef("etiv").estimate - 0.001) < 1e-8);
  CHECK(fit.adj_r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pure noise gives adjusted R2 near zero") {
  auto rs = design(10000, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  for (auto& r : rs) r.measures["Y"] = z(rng);
  const auto fit = fit_mlr(rs, "Y", true);
  CHECK(std::abs(fit.adj_r2) < 0.01);
  CHECK(fit.adj_r2 <= fit.r2);
}

TEST_CASE("coefficients match an independent normal-equations solve") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0, 1);
  for (int rep = 0; rep < 10; ++rep) {
    auto rs = design(50, 100 + rep);
    for (auto& r : rs) r.measures["Y"] = 9000 - 30 * r.age + 400 * r.sex + 0.003 * r.etiv + 500 * z(rng);
    const auto c = columns(rs, "Y");
    const auto oracle = oracle::normal_equations({c.age, c.sex, c.etiv}, c.y);
    const auto fit = fit_mlr(rs, "Y", true);
    const char* names[] = {"intercept", "age", "sex", "etiv"};
    for (int j = 0; j < 4; ++j) {
      const double e = fit.coef(names[j]).estimate;
      CHECK(std::abs(e - oracle[static_cast<std::size_t>(j)]) <= 1e-9 * std::max(1.0, std::abs(oracle[static_cast<std::size_t>(j)])));
    }
    // Residuals are orthogonal to every design column (columns normalized).
    for (const auto* col : {&c.age, &c.sex, &c.etiv}) {
      double norm = 0, dot = 0, rnorm = 0;
      for (std::size_t i = 0; i < col->size(); ++i) {
        norm += (*col)[i] * (*col)[i];
        rnorm += fit.residuals[i] * fit.residuals[i];
        dot += (*col)[i] * fit.residuals[i];
      }
      CHECK(std::abs(dot) / std::sqrt(norm * rnorm) < 1e-8);
    }
    double sum = 0;
    for (double e : fit.residuals) sum += e;
    CHECK(std::abs(sum) / fit.residuals.size() < 1e-8);
    for (const auto& co : fit.coefficients) {
      CHECK(co.p >= 0.0);
      CHECK(co.p <= 1.0);
    }
  }
}

TEST_CASE("p-values follow the t distribution") {
  // Slope estimate on 12 points with a known closed form: t = b / se(b).
  auto rs = design(12, 6);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0, 1);
  for (auto& r : rs) r.measures[kThick] = 2.5 - 0.01 * r.age + 0.05 * z(rng);
  const auto fit = fit_ols({columns(rs, kThick).age}, {"age"}, columns(rs, kThick).y);
  const auto& a = fit.coef("age");
  CHECK(a.t == doctest::Approx(a.estimate / a.std_error).epsilon(1e-12));
  CHECK(a.p < 0.05);
}

TEST_CASE("regression errors") {
  auto rs = design(3, 8);
  for (auto& r : rs) r.measures["Y"] = r.age;
  CHECK_THROWS_AS(fit_mlr(rs, "Y", true), SampleSizeError);
  auto many = design(20, 9);
  for (auto& r : many) {
    r.etiv = 1e6 + 1000 * r.age;  // collinear with age
    r.measures["Y"] = r.age;
  }
  CHECK_THROWS_AS(fit_mlr(many, "Y", true), SingularDesignError);
}

TEST_CASE("cohen f formula and nested R2") {
  CHECK(cohens_f(0.5, 0.25) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(std::isinf(cohens_f(1.0, 0.3)));
  for (double full : {0.1, 0.35, 0.6, 0.93})
    for (double reduced : {0.0, 0.05, 0.09})
      CHECK(std::abs(cohens_f(full, reduced) - std::sqrt((full - reduced) / (1 - full))) < 1e-12);

  auto rs = simulate_cohort(300, 10);
  for (const auto& roi : {std::string("Thalamus"), kThick}) {
    const bool etiv = !is_thickness_roi(roi);
    const auto c = columns(rs, roi);
    const double full = etiv ? oracle::r_squared({c.age, c.sex, c.etiv}, c.y) : oracle::r_squared({c.age, c.sex}, c.y);
    const double reduced = etiv ? oracle::r_squared({c.sex, c.etiv}, c.y) : oracle::r_squared({c.sex}, c.y);
    const auto res = analyze_roi(rs, roi);
    CHECK(std::abs(res.r2 - full) < 1e-10);
    CHECK(std::abs(res.cohen_f_age - std::sqrt((full - reduced) / (1 - full))) < 1e-9);
  }
}

TEST_CASE("cohen f under null and planted effects") {
  std::vector<RoiModel> model = default_cohort_model();
  for (auto& m : model)
    if (m.roi == "Thalamus") m.beta_age = 0.0;
  const auto null = simulate_cohort(10000, 12, model);
  CHECK(analyze_roi(null, "Thalamus").cohen_f_age < 0.03);

  // Age is independent of sex and eTIV: f^2 = beta^2 Var(age) / sigma^2.
  const auto cohort = simulate_cohort(10000, 13);
  for (const auto& m : default_cohort_model()) {
    const double analytic = std::abs(m.beta_age) * std::sqrt(60.0 * 60.0 / 12.0) / m.noise_sd;
    CAPTURE(m.roi);
    CHECK(analyze_roi(cohort, m.roi).cohen_f_age == doctest::Approx(analytic).epsilon(0.05));
  }
}

TEST_CASE("cohen f is invariant to affine rescaling") {
  auto rs = simulate_cohort(200, 14);
  auto scaled = rs;
  for (auto& r : scaled) r.measures["Putamen"] = 3.5 * r.measures["Putamen"] + 700;
  CHECK(analyze_roi(scaled, "Putamen").cohen_f_age ==
        doctest::Approx(analyze_roi(rs, "Putamen").cohen_f_age).epsilon(1e-9));
}

TEST_CASE("cohen d examples") {
  // Pairs share age; e is orthogonal to age and sums to zero.
  const double ages[] = {30, 40, 50, 60};
  const double e[] = {1, -1, -1, 1};
  const double sd = std::sqrt(8.0 / 6.0);
  std::vector<SubjectRecord> same, apart;
  for (int sex = 0; sex < 2; ++sex)
    for (int i = 0; i < 4; ++i) {
      SubjectRecord r;
      r.subject_id = std::to_string(sex) + std::to_string(i);
      r.age = ages[i];
      r.sex = sex;
      r.etiv = 1.5e6;
      r.measures[kThick] = 2.0 + 0.1 * e[i];
      same.push_back(r);
      r.measures[kThick] = 2.0 + 0.1 * e[i] + 0.1 * sd * sex;
      apart.push_back(r);
    }
  CHECK(std::abs(cohens_d_sex(same, kThick, false)) < 1e-12);
  CHECK(cohens_d_sex(apart, kThick, false) == doctest::Approx(1.0).epsilon(1e-12));

  auto flipped = apart;
  for (auto& r : flipped) r.sex = 1 - r.sex;
  CHECK(cohens_d_sex(flipped, kThick, false) == doctest::Approx(-1.0).epsilon(1e-12));

  auto one_sex = apart;
  for (auto& r : one_sex) r.sex = 0;
  CHECK_THROWS_AS(cohens_d_sex(one_sex, kThick, false), GroupError);
}

TEST_CASE("cohen d recovers a planted offset") {
  const std::vector<RoiModel> model{{kThick, 2.8, -0.003, 0.08, 0.0, 0.08}};
  const auto cohort = simulate_cohort(10000, 15, model);
  CHECK(cohens_d_sex(cohort, kThick, false) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("thickness models exclude eTIV") {
  const auto cohort = simulate_cohort(100, 16);
  const auto thick = analyze_roi(cohort, kThick);
  CHECK_FALSE(thick.include_etiv);
  CHECK(thick.coefficients.size() == 3);
  CHECK_THROWS_AS(thick.coef("etiv"), DataError);
  CHECK(analyze_roi(cohort, "Hippocampus").coefficients.size() == 4);
}

TEST_CASE("self concordance") {
  const auto cohort = simulate_cohort(150, 17);
  std::vector<RegressionResult> a, b;
  for (const auto& roi : default_rois()) {
    a.push_back(analyze_roi(cohort, roi));
    b.push_back(analyze_roi(cohort, roi));
  }
  const auto rep = concordance_report(a, b);
  CHECK(rep.sign_agreement == 9);
  CHECK(rep.rank_correlation_f_age == doctest::Approx(1.0));
  CHECK(rep.rank_correlation_d_sex == doctest::Approx(1.0));
  for (const auto& row : rep.rows)
    for (const auto& [k, v] : row.delta) CHECK(v == 0.0);
}

TEST_CASE("thalamus row comparison pattern") {
  auto make = [](double beta_age, double beta_sex, double adj, double f, double d) {
    RegressionResult r;
    r.roi = "Thalamus";
    r.adj_r2 = adj;
    r.cohen_f_age = f;
    r.cohen_d_sex = d;
    r.coefficients = {{"intercept", 0, 1, 0, 1}, {"age", beta_age, 1, 0, 1e-9}, {"sex", beta_sex, 1, 0, 1e-4}};
    return r;
  };
  const auto rep = concordance_report({make(-51.36, 1270, 0.6234, 0.8271, 0.8469)},
                                      {make(-48.51, 933.3, 0.5199, 0.6766, 0.5471)});
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].beta_age_sign_agrees);
  CHECK(rep.rows[0].delta.at("beta_age") == doctest::Approx(2.85));
  CHECK(rep.rows[0].rel_delta.at("beta_age") == doctest::Approx(2.85 / 51.36));
  CHECK(rep.rows[0].delta.at("f_age") == doctest::Approx(0.6766 - 0.8271));
}

TEST_CASE("perturbed cohort keeps beta_age signs") {
  const auto gt = simulate_cohort(200, 18);
  const auto gen = perturb_cohort(gt, 0.02, 19);
  std::vector<RegressionResult> a, b;
  for (const auto& roi : default_rois()) {
    a.push_back(analyze_roi(gt, roi));
    b.push_back(analyze_roi(gen, roi));
  }
  const auto rep = concordance_report(std::move(a), std::move(b));
  CHECK(rep.sign_agreement == 9);
}

TEST_CASE("pairing errors") {
  const auto cohort = simulate_cohort(60, 20);
  std::vector<RegressionResult> a{analyze_roi(cohort, "Thalamus")}, b{analyze_roi(cohort, "Putamen")};
  CHECK_THROWS_AS(concordance_report(a, b), PairingError);
  CHECK_THROWS_AS(concordance_report(a, {}), PairingError);
}

TEST_CASE("subject table round trip and schema errors") {
  const auto dir = testutil::temp_dir("biostats_table");
  const auto cohort = simulate_cohort(25, 21);
  write_subject_table(dir / "gt.csv", cohort, default_rois());
  const auto back = read_subject_table(dir / "gt.csv");
  REQUIRE(back.size() == cohort.size());
  CHECK(table_rois(back) == default_rois());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].sex == cohort[i].sex);
    CHECK(back[i].age == doctest::Approx(cohort[i].age).epsilon(1e-11));
    CHECK(back[i].measures.at("Thalamus") == doctest::Approx(cohort[i].measures.at("Thalamus")).epsilon(1e-11));
  }
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "bad.csv") << text;
    return dir / "bad.csv";
  };
  CHECK_THROWS_AS(read_subject_table(write("id,age\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,X,1e6,GT,1\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,-5,F,1e6,GT,1\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,F,1e6,GT,-1\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,F,1e6,XX,1\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,F,abc,GT,1\n")), SchemaError);
  CHECK_THROWS_AS(read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,F,1e6,GT\n")), SchemaError);
  const auto ok = read_subject_table(write("subject_id,age,sex,etiv,source,Thalamus\na,50,M,1e6,GEN,7\n"));
  CHECK(ok[0].sex == 1);
  CHECK(ok[0].source == Source::GEN);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
  // Ties use average ranks: ranks (1.5, 1.5, 3) vs (1, 2, 3).
  CHECK(spearman({5, 5, 9}, {1, 2, 3}) == doctest::Approx(0.8660254037844386));
}
