#include <doctest.h>

#include <cmath>

#include "gresynth/baselines/baselines.hpp"
#include "gresynth/data/phantom.hpp"
#include "gresynth/data/preprocess.hpp"
#include "gresynth/error.hpp"
#include "gresynth/train/trainer.hpp"
#include "helpers.hpp"

using namespace gresynth;
using namespace gresynth::baselines;

namespace {

train::TrainConfig fast_cfg() {
  train::TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 2;
  c.ema_decay = 0.99;
  return c;
}

train::GanConfig small_gan() {
  train::GanConfig g;
  g.disc_channels = 8;
  g.disc_layers = 2;
  return g;
}

}  // namespace

TEST_CASE("l1 loss") {
  const auto t = testutil::random_tensor({2, 1, 8, 8}, 1);
  CHECK(l1_loss(t, t) == 0.0);
  Tensor<float> shifted = t;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += 0.5f;
  CHECK(l1_loss(shifted, t) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("generator config drops the noisy channel and the time input") {
  const auto g = generator_config(testutil::tiny_config(5));
  CHECK(g.in_channels == 5);
  CHECK_FALSE(g.time_conditioning);
}

TEST_CASE("l1 step rejects a channel mismatch") {
  Generator gen(generator_config(testutil::tiny_config(3)), 1);
  const auto cond = testutil::random_tensor({2, 2, 16, 16}, 2);
  const auto tgt = testutil::random_tensor({2, 1, 16, 16}, 3);
  CHECK_THROWS_AS(l1_train_step(gen, cond, tgt, fast_cfg()), ConfigError);
}

TEST_CASE("l1 overfit on one sample") {
  Generator gen(generator_config(testutil::tiny_config(2)), 4);
  const auto cond = testutil::random_tensor({1, 2, 16, 16}, 5);
  Tensor<float> tgt({1, 1, 16, 16});
  for (std::size_t p = 0; p < tgt.size(); ++p) tgt.data()[p] = 0.6f * cond.plane(0, 1)[p] - 0.1f;
  auto cfg = fast_cfg();
  double loss = 0.0;
  for (int i = 0; i < 500; ++i) loss = l1_train_step(gen, cond, tgt, cfg);
  const Tensor<float> pred = gen.net.forward(cond, {}, gen.state.raw, false);
  MESSAGE("final L1 " << loss << ", eval L1 " << l1_loss(pred, tgt));
  CHECK(l1_loss(pred, tgt) < 0.05);
}

TEST_CASE("least-squares discriminator loss at constant 0.5 outputs") {
  Tensor<float> d({2, 1, 3, 3}, 0.5f);
  CHECK(discriminator_loss(d, d, train::GanLossKind::LeastSquares) == doctest::Approx(0.25));
  CHECK(generator_adversarial_loss(d, train::GanLossKind::LeastSquares) == doctest::Approx(0.25));
  Tensor<float> zero({1, 1, 2, 2}, 0.0f);
  CHECK(discriminator_loss(zero, zero, train::GanLossKind::CrossEntropy) ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("score-map loss gradients match finite differences") {
  for (auto kind : {train::GanLossKind::LeastSquares, train::GanLossKind::CrossEntropy}) {
    auto real = testutil::random_tensor({1, 1, 2, 2}, 8);
    auto fake = testutil::random_tensor({1, 1, 2, 2}, 9);
    Tensor<float> gr, gf;
    discriminator_loss(real, fake, kind, &gr, &gf);
    const float h = 1e-3f;
    for (std::size_t i = 0; i < real.size(); ++i) {
      auto rp = real, rm = real;
      rp.data()[i] += h;
      rm.data()[i] -= h;
      const double num = (discriminator_loss(rp, fake, kind) - discriminator_loss(rm, fake, kind)) / (2 * h);
      CHECK(gr.data()[i] == doctest::Approx(num).epsilon(1e-2));
    }
  }
}

TEST_CASE("patch discriminator shapes and input gradient") {
  PatchDiscriminator d(3, 8, 2);
  CHECK(d.output_size(16) == 2);
  CHECK_THROWS_AS(d.output_size(4), ShapeError);
  const auto params = d.initialize(1);
  const auto x = testutil::random_tensor({2, 3, 16, 16}, 2);
  const auto y = d.forward(x, params, true);
  CHECK(y.shape() == Shape4{2, 1, 2, 2});
  // Input gradient of sum(y) against central differences.
  std::vector<float> grads(params.size(), 0.0f);
  const auto dx = d.backward(Tensor<float>(y.shape(), 1.0f), params, grads);
  auto total = [&](const Tensor<float>& in) {
    const auto o = d.forward(in, params, false);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o.data()[i];
    return s;
  };
  for (std::size_t i : {3u, 100u, 517u}) {
    auto p = x, m = x;
    p.data()[i] += 1e-2f;
    m.data()[i] -= 1e-2f;
    CHECK(dx.data()[i] == doctest::Approx((total(p) - total(m)) / 2e-2).epsilon(0.05));
  }
}

TEST_CASE("pix2pix without the adversarial term equals the l1 step bitwise") {
  const auto cond = testutil::random_tensor({2, 2, 16, 16}, 11);
  const auto tgt = testutil::random_tensor({2, 1, 16, 16}, 12);
  auto gan = small_gan();
  gan.adversarial = false;
  const auto gcfg = generator_config(testutil::tiny_config(2));
  Generator a(gcfg, 3), b(gcfg, 3);
  Discriminator disc(3, gan, 4);
  for (int i = 0; i < 5; ++i) {
    const double la = l1_train_step(a, cond, tgt, fast_cfg());
    const GanLosses lb = pix2pix_train_step(b, disc, cond, tgt, fast_cfg(), gan);
    CHECK(la == lb.l1);
  }
  CHECK(a.state.raw == b.state.raw);
  CHECK(a.state.ema == b.state.ema);
}

TEST_CASE("pix2pix conditions both discriminator branches and reports finite losses") {
  const auto cond = testutil::random_tensor({2, 2, 16, 16}, 13);
  const auto tgt = testutil::random_tensor({2, 1, 16, 16}, 14);
  const auto gcfg = generator_config(testutil::tiny_config(2));
  Generator gen(gcfg, 5);
  Discriminator disc(3, small_gan(), 6);
  CHECK_THROWS_AS(Discriminator(1, small_gan(), 1), ConfigError);
  const GanLosses l = pix2pix_train_step(gen, disc, cond, tgt, fast_cfg(), small_gan());
  CHECK(std::isfinite(l.gen_loss));
  CHECK(std::isfinite(l.disc_loss));
  CHECK(l.gen_loss == doctest::Approx(100.0 * l.l1 + l.adversarial));
  CHECK(disc.step == 1);
  CHECK(gen.state.step == 1);
}

TEST_CASE("saturation monitor fires once after 1000 saturated steps") {
  SaturationMonitor m;
  int fired = 0;
  for (int i = 0; i < 999; ++i) fired += m.observe(1e-7);
  CHECK(fired == 0);
  fired += m.observe(1e-7);
  CHECK(fired == 1);
  for (int i = 0; i < 500; ++i) fired += m.observe(1e-7);
  CHECK(fired == 1);
  m.observe(0.3);
  CHECK(m.run_length() == 0);
}

TEST_CASE("pix2pix checkpoint round trip") {
  auto cfg = fast_cfg();
  Pix2PixMethod a(testutil::tiny_config(2), cfg, small_gan(), 1);
  const auto cond = testutil::random_tensor({2, 2, 16, 16}, 15);
  const auto tgt = testutil::random_tensor({2, 1, 16, 16}, 16);
  train::Rng rng(0);
  a.step(cond, tgt, rng);
  const auto dir = testutil::temp_dir("p2pck");
  train::write_checkpoint(dir, a.checkpoint());
  Pix2PixMethod b(testutil::tiny_config(2), cfg, small_gan(), 2);
  b.restore(train::read_checkpoint(dir));
  CHECK(b.step_count() == 1);
  CHECK(b.discriminator().raw == a.discriminator().raw);
  CHECK(b.ema_weights() == a.ema_weights());
  UnetL1Method c(testutil::tiny_config(2), cfg, 1);
  CHECK_THROWS_AS(c.restore(train::read_checkpoint(dir)), ConfigError);
}

TEST_CASE("pix2pix smoke run on eight phantom slices") {
  const auto dir = testutil::temp_dir("pix2pix_smoke");
  data::write_phantom(dir / "sub-001", data::generate_phantom(21, data::PhantomConfig{32, 8, 7}));
  data::PreprocessOptions opt;
  opt.target_shape = {32, 32, 8};
  const auto subject = data::preprocess_subject(dir / "sub-001", "sub-001", opt);
  const auto arr = data::subject_slice_array(subject);  // [8, 8, 32, 32]
  const int n_cond = 7, plane = 32 * 32;
  Tensor<float> cond_all({8, n_cond, 32, 32}), tgt_all({8, 1, 32, 32});
  for (int z = 0; z < 8; ++z) {
    std::copy_n(arr.data() + static_cast<std::size_t>(z) * 8 * plane, n_cond * plane, cond_all.sample(z));
    std::copy_n(arr.data() + (static_cast<std::size_t>(z) * 8 + 7) * plane, plane, tgt_all.sample(z));
  }

  auto denoiser = testutil::tiny_config(n_cond);
  denoiser.image_size = 32;
  denoiser.attention_resolutions = {16};
  train::TrainConfig cfg = fast_cfg();
  cfg.learning_rate = 2e-4;
  Pix2PixMethod method(denoiser, cfg, small_gan(), 7);
  train::BatchOrder order(8, 8);
  auto l1_of = [](const train::StepResult& r) -> double {
    for (const auto& [name, v] : r.extra)
      if (name == "l1") return v;
    return NAN;
  };
  double first = 0, last = 0;
  const int steps = 2000, window = 100;
  for (int it = 0; it < steps; ++it) {
    Tensor<float> c, t;
    const auto idx = order.batch(it, 2);
    c = Tensor<float>({2, n_cond, 32, 32});
    t = Tensor<float>({2, 1, 32, 32});
    for (int b = 0; b < 2; ++b) {
      std::copy_n(cond_all.sample(idx[b]), n_cond * plane, c.sample(b));
      std::copy_n(tgt_all.sample(idx[b]), plane, t.sample(b));
    }
    auto rng = train::iteration_rng(9, it);
    const double l1 = l1_of(method.step(c, t, rng));
    REQUIRE(std::isfinite(l1));
    if (it < window) first += l1 / window;
    if (it >= steps - window) last += l1 / window;
  }
  MESSAGE("pix2pix L1 " << first << " -> " << last);
  CHECK(last <= 0.7 * first);
}
