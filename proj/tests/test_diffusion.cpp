#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gresynth/diffusion.hpp"
#include "gresynth/error.hpp"
#include "oracles.hpp"

using namespace gresynth;
using namespace gresynth::diffusion;

namespace {

Tensor<double> random_image(std::uint64_t seed, Shape4 s, double sd = 1.0) {
  Tensor<double> t(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  for (auto& v : t.storage()) v = z(rng);
  return t;
}

double rmse(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return std::sqrt(s / a.size());
}

}  // namespace

TEST_CASE("reference schedule: tau list and alpha_bar") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  REQUIRE(s.size() == 100);
  for (int j = 0; j < 100; ++j) CHECK(s.tau_at(j) == 1 + 10 * j);
  CHECK(s.tau_at(99) == 991);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
  const auto brute = oracle::alpha_bar(1000, 1e-4L, 0.02L);
  for (int t = 1; t <= 1000; ++t) {
    const double ref = static_cast<double>(brute[static_cast<std::size_t>(t)]);
    CHECK(std::abs(s.alpha_bar(t) - ref) <= 1e-12 * ref);
  }
  CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-15));
  for (int t = 1; t < 1000; ++t) {
    CHECK(s.alpha_bar(t + 1) < s.alpha_bar(t));
    CHECK(s.alpha_bar(t) > 0.0);
  }
  CHECK(s.previous(0) == 0);
  CHECK(s.previous(1) == 1);
  CHECK(s.previous(99) == 981);
}

TEST_CASE("constant beta gives a geometric alpha_bar") {
  const auto s = build_schedule(10, 10, 0.1, 0.1);
  for (int t = 0; t <= 10; ++t) CHECK(s.alpha_bar(t) == doctest::Approx(std::pow(0.9, t)).epsilon(1e-14));
}

TEST_CASE("schedule parameter errors") {
  CHECK_THROWS_AS(build_schedule(100, 200, 1e-4, 0.02), ParameterError);
  CHECK_THROWS_AS(build_schedule(100, 10, 0.0, 0.02), ParameterError);
  CHECK_THROWS_AS(build_schedule(100, 10, 0.03, 0.02), ParameterError);
  CHECK_THROWS_AS(build_schedule(100, 10, 1e-4, 1.0), ParameterError);
  CHECK_THROWS_AS(build_schedule(100, 0, 1e-4, 0.02), ParameterError);
}

TEST_CASE("forward diffusion edge cases and scalar oracle") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  const auto x0 = random_image(1, {1, 1, 8, 8});
  const auto eps = random_image(2, {1, 1, 8, 8});
  const Tensor<double> zero({1, 1, 8, 8}, 0.0);
  const auto a = forward_diffuse(x0, zero, 500, s);
  const auto b = forward_diffuse(zero, eps, 500, s);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(a.data()[i] == doctest::Approx(std::sqrt(s.alpha_bar(500)) * x0.data()[i]).epsilon(1e-15));
    CHECK(b.data()[i] == doctest::Approx(std::sqrt(1 - s.alpha_bar(500)) * eps.data()[i]).epsilon(1e-15));
  }
  const auto brute = oracle::alpha_bar(1000, 1e-4L, 0.02L);
  const long double ab = brute[991];
  const Tensor<double> one({1, 1, 1, 1}, 1.0);
  const double v = forward_diffuse(one, one, 991, s).data()[0];
  CHECK(std::abs(v - static_cast<double>(std::sqrt(ab) + std::sqrt(1 - ab))) < 1e-12);
  CHECK_THROWS_AS(forward_diffuse(x0, random_image(3, {1, 1, 4, 4}), 5, s), ShapeError);
}

TEST_CASE("forward then inverse with the true noise recovers x0") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(1, 1000);
  for (int rep = 0; rep < 20; ++rep) {
    const int t = pick(rng);
    const auto x0 = random_image(10 + rep, {1, 1, 1, 1});
    const auto eps = random_image(50 + rep, {1, 1, 1, 1});
    const auto xt = forward_diffuse(x0, eps, t, s);
    const double rec = (xt.data()[0] - std::sqrt(1 - s.alpha_bar(t)) * eps.data()[0]) / std::sqrt(s.alpha_bar(t));
    CHECK(std::abs(rec - x0.data()[0]) <= 1e-10 * std::max(1.0, std::abs(x0.data()[0])));

    const auto img = random_image(100 + rep, {1, 1, 16, 16});
    const auto noise = random_image(200 + rep, {1, 1, 16, 16});
    CHECK(rmse(ddim_step(forward_diffuse(img, noise, t, s), noise, t, 0, s), img) < 1e-5);
  }
}

TEST_CASE("variance is preserved in expectation") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  const Shape4 shape{1, 1, 1000, 1000};
  const auto x0 = random_image(7, shape);
  const auto eps = random_image(8, shape);
  for (int t : {1, 250, 991}) {
    const auto xt = forward_diffuse(x0, eps, t, s);
    double m = 0, v = 0;
    for (double x : xt.storage()) m += x;
    m /= xt.size();
    for (double x : xt.storage()) v += (x - m) * (x - m);
    v /= xt.size();
    CHECK(v == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("ddim step identity and ordering") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  const auto x = random_image(9, {2, 1, 4, 4});
  const auto e = random_image(10, {2, 1, 4, 4});
  const auto same = ddim_step(x, e, 401, 401, s);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
  CHECK_THROWS_AS(ddim_step(x, e, 11, 21, s), ParameterError);
  CHECK_THROWS_AS(ddim_step(x, random_image(1, {1, 1, 4, 4}), 11, 1, s), ShapeError);
}

TEST_CASE("two-step scalar chain matches a hand-rolled recursion") {
  const auto s = build_schedule(20, 2, 1e-3, 0.05);
  REQUIRE(s.tau_at(0) == 1);
  REQUIRE(s.tau_at(1) == 11);
  auto oracle = [](double x, int t) { return 0.3 * x + 0.001 * t; };
  const NoisePredictor<double> predictor = [&](const Tensor<double>& xc, int t) {
    Tensor<double> out({1, 1, 1, 1});
    out.data()[0] = oracle(xc.data()[xc.size() - 1], t);
    return out;
  };
  const Tensor<double> cond({1, 1, 1, 1}, 0.5);
  const auto result = sample(cond, predictor, s, 99);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> z(0.0, 1.0);
  double x = z(rng);
  const int steps[][2] = {{11, 1}, {1, 0}};
  const auto brute = oracle::alpha_bar(20, 1e-3L, 0.05L);
  for (const auto& st : steps) {
    const double at = static_cast<double>(brute[static_cast<std::size_t>(st[0])]);
    const double ap = static_cast<double>(brute[static_cast<std::size_t>(st[1])]);
    const double e = oracle(x, st[0]);
    const double x0 = (x - std::sqrt(1 - at) * e) / std::sqrt(at);
    x = std::sqrt(ap) * x0 + std::sqrt(1 - ap) * e;
  }
  CHECK(result.data()[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("zero predictor telescopes") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  const NoisePredictor<double> zero = [](const Tensor<double>& xc, int) {
    return Tensor<double>({xc.n(), 1, xc.h(), xc.w()}, 0.0);
  };
  const Tensor<double> cond({1, 2, 4, 4}, 0.0);
  const auto out = sample(cond, zero, s, 5);
  std::mt19937_64 rng(5);
  Tensor<double> xT({1, 1, 4, 4});
  fill_normal(xT, rng);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(xT.data()[i] / std::sqrt(s.alpha_bar(991))).epsilon(1e-10));
}

TEST_CASE("oracle predictor inverts the full chain") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  auto x0 = random_image(21, {1, 1, 64, 64}, 0.5);
  const NoisePredictor<double> oracle = [&](const Tensor<double>& xc, int t) {
    Tensor<double> e({1, 1, 64, 64});
    const double ab = s.alpha_bar(t);
    const double* xt = xc.plane(0, xc.c() - 1);
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = (xt[i] - std::sqrt(ab) * x0.data()[i]) / std::sqrt(1 - ab);
    return e;
  };
  const Tensor<double> cond({1, 1, 64, 64}, 0.0);
  CHECK(rmse(sample(cond, oracle, s, 3), x0) < 1e-5);
}

TEST_CASE("x0 clamping") {
  const auto s = build_schedule(1000, 100, 1e-4, 0.02);
  // A single clamped step lands on sqrt(ab_prev) * clamp(x0_hat) + dir * eps_from_clamped.
  Tensor<double> xt({1, 1, 1, 2}), eps({1, 1, 1, 2});
  xt.data()[0] = 0.3;
  xt.data()[1] = 0.1;
  eps.data()[0] = -0.5;
  eps.data()[1] = 0.2;
  const double ab = s.alpha_bar(501), abp = s.alpha_bar(491);
  const auto y = ddim_step(xt, eps, 501, 491, s, 0.0, nullptr, 1.0);
  const double raw0 = (0.3 + 0.5 * std::sqrt(1 - ab)) / std::sqrt(ab);
  REQUIRE(raw0 > 1.0);
  const double e0 = (0.3 - std::sqrt(ab)) / std::sqrt(1 - ab);
  CHECK(y.data()[0] == doctest::Approx(std::sqrt(abp) + std::sqrt(1 - abp) * e0).epsilon(1e-12));
  const auto unclamped = ddim_step(xt, eps, 501, 491, s);
  CHECK(y.data()[1] == unclamped.data()[1]);

  // The zero predictor diverges unclamped but ends inside the bound when clamped.
  const NoisePredictor<double> zero = [](const Tensor<double>& xc, int) {
    return Tensor<double>({xc.n(), 1, xc.h(), xc.w()}, 0.0);
  };
  const Tensor<double> cond({1, 1, 8, 8}, 0.0);
  const auto out = sample(cond, zero, s, 5, 0.0, 1.0);
  for (double v : out.storage()) CHECK(std::abs(v) <= 1.0);

  // The oracle chain is unaffected for targets inside the bound.
  auto x0 = random_image(22, {1, 1, 16, 16}, 0.5);
  for (auto& v : x0.storage()) v = std::clamp(v, -0.95, 0.95);
  const NoisePredictor<double> oracle = [&](const Tensor<double>& xc, int t) {
    Tensor<double> e({1, 1, 16, 16});
    const double a = s.alpha_bar(t);
    const double* x = xc.plane(0, xc.c() - 1);
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = (x[i] - std::sqrt(a) * x0.data()[i]) / std::sqrt(1 - a);
    return e;
  };
  CHECK(rmse(sample(Tensor<double>({1, 1, 16, 16}, 0.0), oracle, s, 3, 0.0, 1.0), x0) < 1e-5);
}

TEST_CASE("sampling determinism and predictor shape check") {
  const auto s = build_schedule(100, 10, 1e-4, 0.02);
  const NoisePredictor<float> pred = [](const Tensor<float>& xc, int t) {
    Tensor<float> e({xc.n(), 1, xc.h(), xc.w()});
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = 0.1f * xc.plane(0, 1)[i % e.shape().plane()] + 1e-3f * t;
    return e;
  };
  const Tensor<float> cond({1, 1, 8, 8}, 0.2f);
  const auto a = sample(cond, pred, s, 17);
  const auto b = sample(cond, pred, s, 17);
  const auto c = sample(cond, pred, s, 18);
  CHECK(a.storage() == b.storage());
  CHECK(a.storage() != c.storage());
  const NoisePredictor<float> wrong = [](const Tensor<float>& xc, int) { return Tensor<float>({xc.n(), 2, xc.h(), xc.w()}); };
  CHECK_THROWS_AS(sample(cond, wrong, s, 1), ConfigError);
}

TEST_CASE("stochastic step requires noise") {
  const auto s = build_schedule(100, 10, 1e-4, 0.02);
  const auto x = random_image(1, {1, 1, 4, 4});
  CHECK_THROWS_AS(ddim_step(x, x, 51, 41, s, 0.5), ShapeError);
  const auto n = random_image(2, {1, 1, 4, 4});
  const auto y = ddim_step(x, x, 51, 41, s, 0.5, &n);
  CHECK(y.storage() != ddim_step(x, x, 51, 41, s).storage());
}
