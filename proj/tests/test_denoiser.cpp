#include <doctest.h>

#include <cmath>
#include <random>

#include "gresynth/error.hpp"
#include "gresynth/nn/unet.hpp"
#include "helpers.hpp"

using namespace gresynth;
using namespace gresynth::nn;

namespace {

DenoiserConfig grad_config() {
  DenoiserConfig c;
  c.in_channels = 3;
  c.base_channels = 8;
  c.channel_multipliers = {1, 2};
  c.resblocks_per_level = 1;
  c.groupnorm_groups = 4;
  c.attention_resolutions = {4};
  c.image_size = 8;
  return c;
}

Tensor<double> normal(Shape4 s, std::uint64_t seed) {
  Tensor<double> t(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0, 1);
  for (auto& v : t.storage()) v = z(rng);
  return t;
}

}  // namespace

TEST_CASE("full-scale channel counts produce single-channel output") {
  for (int n : {5, 7}) {
    auto c = DenoiserConfig::full_scale(n);
    CHECK(c.in_channels == n + 1);
    c.base_channels = 8;  // keep the test small; the geometry is unchanged
    c.groupnorm_groups = 4;
    UNet<float> net(c);
    const auto w = net.initialize(1);
    const auto x = testutil::random_tensor({1, n + 1, 256, 256}, 2);
    const auto y = net.forward(x, {500}, w, false);
    CHECK(y.shape() == Shape4{1, 1, 256, 256});
  }
}

TEST_CASE("spatial trace and attention placement") {
  DenoiserConfig c = DenoiserConfig::desk(7);
  c.channel_multipliers = {1, 1, 2, 2, 4, 4};
  c.image_size = 64;
  CHECK(c.level_sizes() == std::vector<int>{64, 32, 16, 8, 4, 2});
  UNet<float> net(c);
  CHECK(net.deepest_size() == 2);
  CHECK(net.attention_sizes() == std::vector<int>{16});
}

TEST_CASE("configuration validation") {
  auto c = grad_config();
  c.in_channels = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = grad_config();
  c.image_size = 9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = grad_config();
  c.groupnorm_groups = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  UNet<float> net(grad_config());
  const auto w = net.initialize(1);
  CHECK_THROWS_AS(net.forward(testutil::random_tensor({1, 2, 8, 8}, 1), {1}, w, false), ConfigError);
}

TEST_CASE("zero parameters give zero output, zero-init output conv gives zero prediction") {
  UNet<float> net(grad_config());
  const std::vector<float> zeros(net.parameter_count(), 0.0f);
  const auto x = testutil::random_tensor({2, 3, 8, 8}, 3);
  const auto y0 = net.forward(x, {1, 900}, zeros, false);
  for (float v : y0.storage()) CHECK(v == 0.0f);
  const auto w = net.initialize(4);
  const auto y1 = net.forward(x, {1, 900}, w, false);
  for (float v : y1.storage()) CHECK(v == 0.0f);
}

TEST_CASE("initialization is deterministic") {
  UNet<float> net(grad_config());
  CHECK(net.initialize(9) == net.initialize(9));
  CHECK(net.initialize(9) != net.initialize(10));
}

TEST_CASE("initial loss with a zero output layer is one per element") {
  UNet<float> net(testutil::tiny_config(2));
  const auto w = net.initialize(5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0, 1);
  double total = 0;
  std::size_t count = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = testutil::random_tensor({2, 3, 16, 16}, 100 + rep);
    const auto pred = net.forward(x, {11, 991}, w, false);
    for (float p : pred.storage()) {
      const double e = z(rng);
      total += (p - e) * (p - e);
      ++count;
    }
  }
  CHECK(total / count == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("analytic gradients match central differences") {
  UNet<double> net(grad_config());
  auto w = net.initialize(7);
  // Perturb every parameter so the zero-initialized output conv passes gradients.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& v : w) v += jitter(rng);
  const auto x = normal({2, 3, 8, 8}, 9);
  const auto eps = normal({2, 1, 8, 8}, 10);
  const std::vector<int> ts{31, 702};

  auto loss = [&](const std::vector<double>& p) {
    const auto y = net.forward(x, ts, p, true);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y.data()[i] - eps.data()[i]) * (y.data()[i] - eps.data()[i]);
    return s / y.size();
  };
  const auto y = net.forward(x, ts, w, true);
  Tensor<double> dy(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dy.data()[i] = 2.0 * (y.data()[i] - eps.data()[i]) / y.size();
  std::vector<double> grads(w.size(), 0.0);
  net.backward(dy, w, grads);

  std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
  int checked = 0, failures = 0;
  while (checked < 25) {
    const std::size_t i = pick(rng);
    const double h = 1e-5;
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (loss(wp) - loss(wm)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grads[i]), 1e-7});
    if (std::abs(fd - grads[i]) / scale > 1e-3) {
      ++failures;
      MESSAGE("parameter " << i << ": analytic " << grads[i] << " numeric " << fd);
    }
    ++checked;
  }
  CHECK(failures == 0);
}

TEST_CASE("timestep changes the prediction after perturbing weights") {
  UNet<float> net(testutil::tiny_config(1));
  auto w = net.initialize(11);
  std::mt19937_64 rng(12);
  std::normal_distribution<float> jitter(0.0f, 0.05f);
  for (auto& v : w) v += jitter(rng);
  const auto x = testutil::random_tensor({1, 2, 16, 16}, 13);
  const auto a = net.forward(x, {1}, w, false);
  const auto b = net.forward(x, {501}, w, false);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  CHECK(diff / a.size() > 1e-4);
}

TEST_CASE("inference forward matches training forward") {
  auto c = DenoiserConfig::desk(7);
  c.base_channels = 16;
  c.groupnorm_groups = 8;
  UNet<float> net(c);
  auto w = net.initialize(9);
  std::mt19937_64 rng(10);
  std::normal_distribution<float> z(0, 1);
  for (auto& v : w) v += 0.02f * z(rng);
  auto x = testutil::random_tensor({2, 8, 64, 64}, 11);
  const std::vector<int> ts{31, 781};
  const auto a = net.forward(x, ts, w, true);
  const auto b = net.forward(x, ts, w, false);
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
  // Batch composition must not change a sample's output.
  Tensor<float> one({1, 8, 64, 64});
  std::copy_n(x.sample(1), one.size(), one.data());
  const auto c1 = net.forward(one, {781}, w, false);
  for (std::size_t i = 0; i < c1.size(); ++i) REQUIRE(c1.data()[i] == doctest::Approx(b.sample(1)[i]).epsilon(1e-4));
}
