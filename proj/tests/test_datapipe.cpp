#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gresynth/data/dataset.hpp"
#include "gresynth/data/phantom.hpp"
#include "gresynth/data/preprocess.hpp"
#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"
#include "gresynth/io/npy.hpp"
#include "gresynth/log.hpp"
#include "gresynth/metrics/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gresynth;
using namespace gresynth::data;

namespace {

Volume random_volume(int x, int y, int z, std::uint64_t seed, float lo = -50, float hi = 200) {
  Volume v(x, y, z);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& d : v.data) d = u(rng);
  return v;
}

// Nonlinear least squares for S0 exp(-TE R2*) by Gauss-Newton from the log-linear start.
double nls_r2star(const std::vector<double>& s, const std::vector<double>& te, double r0) {
  double logs0 = 0;
  for (std::size_t i = 0; i < s.size(); ++i) logs0 += std::log(s[i]) + te[i] * r0;
  double s0 = std::exp(logs0 / s.size()), r = r0;
  for (int it = 0; it < 50; ++it) {
    double a = 0, b = 0, c = 0, g0 = 0, g1 = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double e = std::exp(-te[i] * r);
      const double res = s[i] - s0 * e;
      const double j0 = e, j1 = -s0 * te[i] * e;
      a += j0 * j0;
      b += j0 * j1;
      c += j1 * j1;
      g0 += j0 * res;
      g1 += j1 * res;
    }
    const double det = a * c - b * b;
    const double d0 = (c * g0 - b * g1) / det, d1 = (a * g1 - b * g0) / det;
    s0 += d0;
    r += d1;
    if (std::abs(d1) < 1e-15) break;
  }
  return r;
}

}  // namespace

TEST_CASE("pad_crop identity, offsets and round trip") {
  const auto v = random_volume(16, 16, 8, 1);
  PadCropInfo info;
  const auto same = pad_crop(v, {16, 16, 8}, 0.0f, &info);
  CHECK(same.data == v.data);
  CHECK(info.offset == Grid{0, 0, 0});

  const auto odd = random_volume(25, 24, 17, 2);
  const auto out = pad_crop(odd, {32, 32, 16}, 0.0f, &info);
  CHECK(out.nx == 32);
  CHECK(out.ny == 32);
  CHECK(out.nz == 16);
  // Centered within one voxel: the original center lands at the target center.
  for (int a = 0; a < 3; ++a) {
    const double orig_center = (info.original[a] - 1) / 2.0 + info.offset[a];
    CHECK(std::abs(orig_center - (info.target[a] - 1) / 2.0) <= 1.0);
  }
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const int ox = x - info.offset[0], oy = y - info.offset[1], oz = z - info.offset[2];
        const bool inside = ox >= 0 && ox < 25 && oy >= 0 && oy < 24 && oz >= 0 && oz < 17;
        CHECK(out.at(x, y, z) == (inside ? odd.at(ox, oy, oz) : 0.0f));
      }

  const auto padded_only = random_volume(20, 18, 10, 3);
  const auto big = pad_crop(padded_only, {32, 32, 16}, -7.0f, &info);
  CHECK(undo_pad_crop(big, info).data == padded_only.data);
  // World coordinates of a retained voxel are unchanged.
  const auto& A = padded_only.affine;
  const auto& B = big.affine;
  for (int r = 0; r < 3; ++r) {
    const double wa = A[r][0] * 3 + A[r][1] * 4 + A[r][2] * 5 + A[r][3];
    const double wb = B[r][0] * (3 + info.offset[0]) + B[r][1] * (4 + info.offset[1]) +
                      B[r][2] * (5 + info.offset[2]) + B[r][3];
    CHECK(wa == doctest::Approx(wb));
  }
}

TEST_CASE("normalization examples and round trip") {
  Volume v(3, 1, 1);
  v.data = {0, 5, 10};
  NormRecord rec;
  CHECK(normalize(v, &rec).data == std::vector<float>{-1, 0, 1});

  std::vector<std::string> warnings;
  set_log_sink([&](const std::string& m) { warnings.push_back(m); });
  const auto flat = normalize(Volume(4, 4, 2, 3.5f), &rec);
  set_log_sink(nullptr);
  CHECK(rec.degenerate);
  CHECK(std::all_of(flat.data.begin(), flat.data.end(), [](float x) { return x == 0.0f; }));
  CHECK_FALSE(warnings.empty());

  const auto r = random_volume(12, 10, 6, 4);
  const auto back = denormalize(normalize(r, &rec), rec);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(std::abs(back.data[i] - r.data[i]) <= 1e-6 * std::max(1.0f, std::abs(r.data[i])) + 2e-5);
  const auto n = normalize(r);
  CHECK(*std::min_element(n.data.begin(), n.data.end()) == -1.0f);
  CHECK(*std::max_element(n.data.begin(), n.data.end()) == 1.0f);
}

TEST_CASE("roi masking") {
  Volume v(4, 3, 2);
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = static_cast<float>(i);
  CHECK(apply_roi_mask(v, Volume(4, 3, 2, 1.0f), -1.0f).data == v.data);
  const auto all_fill = apply_roi_mask(v, Volume(4, 3, 2, 0.0f), -1.0f);
  CHECK(std::all_of(all_fill.data.begin(), all_fill.data.end(), [](float x) { return x == -1.0f; }));
  Volume m(4, 3, 2);
  m.at(1, 1, 0) = m.at(2, 1, 0) = m.at(3, 2, 1) = 1.0f;
  const auto out = apply_roi_mask(v, m, -1.0f);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(out.data[i] == (m.data[i] != 0 ? v.data[i] : -1.0f));
  CHECK_THROWS_AS(apply_roi_mask(v, Volume(3, 3, 2), 0.0f), ShapeError);
}

TEST_CASE("dilation examples") {
  Volume one(9, 9, 9);
  one.at(4, 4, 4) = 1;
  const auto cross = dilate(one, 1);
  int count = 0;
  for (float x : cross.data) count += x != 0;
  CHECK(count == 7);
  CHECK(dilate(one, 0).data == one.data);
}

TEST_CASE("dilation matches brute-force set expansion on 16^3 grids") {
  // Iterated 6-connected dilation by k equals the L1 ball of radius k.
  std::mt19937_64 rng(5);
  std::bernoulli_distribution pick(0.01);
  for (int rep = 0; rep < 4; ++rep) {
    Volume m(16, 16, 16);
    std::vector<std::array<int, 3>> seeds;
    for (int z = 0; z < 16; ++z)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          if (pick(rng) || (rep == 3 && x >= 6 && x < 9 && y >= 6 && y < 9 && z >= 6 && z < 9)) {
            m.at(x, y, z) = 1;
            seeds.push_back({x, y, z});
          }
    for (int k : {1, 2, 3}) {
      const auto d = dilate(m, k);
      const auto expected = oracle::l1_expand(seeds, 16, 16, 16, k);
      int mismatches = 0;
      for (std::size_t i = 0; i < d.size(); ++i) mismatches += (d.data[i] != 0) != (expected[i] != 0);
      CHECK(mismatches == 0);
    }
  }
}

TEST_CASE("r2star fit: exact, constant, and noisy against nonlinear least squares") {
  const auto& te = echo_times_ms();
  std::vector<Volume> echoes;
  for (double t : te) {
    Volume e(2, 1, 1);
    e.data = {static_cast<float>(100 * std::exp(-0.05 * t)), 80.0f};
    echoes.push_back(e);
  }
  // Echoes are stored as float32, which bounds the recovery at the acquisition TEs.
  const auto r = fit_r2star(echoes, te);
  CHECK(std::abs(r.data[0] - 0.05) < 1e-6);
  CHECK(r.data[1] == 0.0f);

  // Halving per 4 ms is exactly representable, so the log-linear fit is exact.
  const std::vector<double> dyadic_te{4, 8, 12, 16, 20};
  std::vector<Volume> exact;
  for (int j = 1; j <= 5; ++j) {
    Volume e(1, 1, 1);
    e.data = {std::ldexp(100.0f, -j)};
    exact.push_back(e);
  }
  CHECK(fit_r2star(exact, dyadic_te).data[0] == static_cast<float>(std::log(2.0) / 4.0));
  std::vector<double> bad = te;
  std::swap(bad[1], bad[2]);
  CHECK_THROWS_AS(fit_r2star(echoes, bad), ParameterError);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0, 0.01);
  std::uniform_real_distribution<double> r2(0.01, 0.08);
  const int n = 10000;
  std::vector<Volume> noisy(te.size(), Volume(n, 1, 1));
  std::vector<std::vector<double>> signal(n, std::vector<double>(te.size()));
  for (int i = 0; i < n; ++i) {
    const double rate = r2(rng);
    for (std::size_t e = 0; e < te.size(); ++e) {
      signal[i][e] = static_cast<float>(100 * std::exp(-rate * te[e]) * (1 + z(rng)));
      noisy[e].data[i] = static_cast<float>(signal[i][e]);
    }
  }
  const auto fit = fit_r2star(noisy, te);
  std::vector<double> rel(n);
  for (int i = 0; i < n; ++i) {
    const double oracle = nls_r2star(signal[i], te, fit.data[i]);
    rel[i] = std::abs(fit.data[i] - oracle) / oracle;
  }
  std::nth_element(rel.begin(), rel.begin() + n / 2, rel.end());
  CHECK(rel[n / 2] < 0.05);
}

TEST_CASE("slices round trip, permutation and integrity") {
  const auto v = random_volume(12, 9, 7, 7);
  auto slices = volume_to_slices(v);
  REQUIRE(slices.size() == 7);
  CHECK(slices[0].height == 9);
  CHECK(slices[0].width == 12);
  CHECK(slices_to_volume(slices, 7).data == v.data);
  std::mt19937_64 rng(8);
  std::shuffle(slices.begin(), slices.end(), rng);
  CHECK(slices_to_volume(slices, 7).data == v.data);
  auto missing = slices;
  missing.pop_back();
  CHECK_THROWS_AS(slices_to_volume(missing, 7), DataError);
  auto dup = slices;
  dup[0].index = dup[1].index;
  CHECK_THROWS_AS(slices_to_volume(dup, 7), DataError);
}

TEST_CASE("phantom determinism, r2star consistency and t1w learnability") {
  PhantomConfig cfg;
  const auto a = generate_phantom(derive_seed(3, 0), cfg);
  const auto b = generate_phantom(derive_seed(3, 0), cfg);
  CHECK(a.t1w.data == b.t1w.data);
  CHECK(a.echoes[4].data == b.echoes[4].data);
  CHECK(generate_phantom(derive_seed(3, 1), cfg).t1w.data != a.t1w.data);

  Volume fit_mask;
  const auto r2 = fit_r2star(a.echoes, echo_times_ms(), &fit_mask);
  double worst = 0;
  for (std::size_t i = 0; i < r2.size(); ++i)
    if (a.brain_mask.data[i] != 0) worst = std::max(worst, std::abs(static_cast<double>(r2.data[i]) - a.r2star.data[i]));
  CHECK(worst < 1e-8);

  // Pixel-wise oracle regressor from (class, R2*) to T1w.
  std::map<int, std::size_t> code_to_class;
  const auto& classes = tissue_classes();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    code_to_class[classes[c].left_code] = c;
    code_to_class[classes[c].right_code] = c;
  }
  std::vector<float> truth, pred;
  for (std::size_t i = 0; i < a.t1w.size(); ++i) {
    truth.push_back(a.t1w.data[i]);
    if (a.brain_mask.data[i] == 0) {
      pred.push_back(0.0f);
      continue;
    }
    const auto cls = code_to_class.at(static_cast<int>(a.labels.data[i]));
    pred.push_back(static_cast<float>(t1w_intensity(cls, a.r2star.data[i])));
  }
  const double range = *std::max_element(truth.begin(), truth.end()) - *std::min_element(truth.begin(), truth.end());
  CHECK(metrics::psnr(truth, pred, range) > 40.0);

  cfg.n_structures = 40;
  CHECK_THROWS_AS(generate_phantom(1, cfg), ParameterError);
  cfg = PhantomConfig{};
  cfg.grid_size = 16;
  CHECK_THROWS_AS(generate_phantom(1, cfg), ParameterError);
}

TEST_CASE("preprocessed subject stays in range with masks inside the brain") {
  const auto dir = testutil::temp_dir("datapipe_subject");
  write_phantom(dir / "sub-001", generate_phantom(11, PhantomConfig{48, 12, 7}));
  PreprocessOptions opt;
  opt.target_shape = {64, 64, 16};
  const auto s = preprocess_subject(dir / "sub-001", "sub-001", opt);
  REQUIRE(s.channels.size() == slice_channel_order().size());
  for (const auto& c : s.channels) {
    CHECK(c.nx == 64);
    CHECK(c.nz == 16);
    for (float x : c.data) {
      CHECK(x >= -1.0f);
      CHECK(x <= 1.0f);
    }
  }
  const auto masks = build_roi_masks(s.labels, s.brain_mask, 3);
  for (const auto& m : masks.masks)
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.data[i] != 0) CHECK(s.brain_mask.data[i] != 0);
  const auto arr = subject_slice_array(s);
  CHECK(arr.size() == 16u * 8u * 64u * 64u);

  // The saved target denormalizes back onto the original intensities inside the brain.
  const auto t1 = io::read_nifti(dir / "sub-001" / "t1w.nii");
  const auto back = undo_pad_crop(denormalize(s.channels.back(), s.norms.at("t1w")), s.pad);
  for (std::size_t i = 0; i < t1.size(); ++i)
    if (t1.data[i] > 0) CHECK(back.data[i] == doctest::Approx(t1.data[i]).epsilon(1e-5));
}

TEST_CASE("nifti and npy round trips") {
  const auto dir = testutil::temp_dir("datapipe_io");
  auto v = random_volume(7, 5, 3, 12);
  v.spacing = {0.9, 0.9, 1.5};
  v.reset_affine();
  v.modality = Modality::Echo;
  v.echo_time_ms = 6.61;
  io::write_nifti(dir / "v.nii", v);
  const auto r = io::read_nifti(dir / "v.nii");
  CHECK(r.data == v.data);
  CHECK(r.spacing[2] == doctest::Approx(1.5));
  CHECK(r.modality == Modality::Echo);
  CHECK(r.echo_time_ms == doctest::Approx(6.61));

  const std::vector<float> d{1.5f, -2.0f, 3.25f, 0.0f, 7.0f, 8.0f};
  io::write_npy(dir / "a.npy", d, {2, 3});
  std::vector<std::size_t> shape;
  CHECK(io::read_npy<float>(dir / "a.npy", shape) == d);
  CHECK(shape == std::vector<std::size_t>{2, 3});
}

TEST_CASE("manifest round trip and checksum verification") {
  const auto dir = testutil::temp_dir("datapipe_manifest");
  std::vector<ManifestEntry> entries;
  for (int z = 0; z < 3; ++z) {
    ManifestEntry e;
    e.subject_id = "sub-001";
    e.slice_index = z;
    e.split = "train";
    e.file = "slices/sub-001.npy";
    e.channels = slice_channel_order();
    e.norms["t1w"] = {0.5, 2.5, false};
    e.checksum = 1234;
    entries.push_back(e);
  }
  write_manifest(dir / "manifest.jsonl", entries);
  const auto back = read_manifest(dir / "manifest.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back[2].slice_index == 2);
  CHECK(back[0].norms.at("t1w").max == 2.5);
  CHECK(back[1].checksum == 1234u);
  CHECK(manifest_subjects(back, "train") == std::vector<std::string>{"sub-001"});

  std::filesystem::create_directories(dir / "slices");
  std::vector<float> arr(3 * 8 * 4 * 4, 0.5f);
  io::write_npy(dir / "slices/sub-001.npy", arr, {3, 8, 4, 4});
  CHECK_THROWS_AS(load_slices(dir, back, "train", 7), DataError);  // checksum mismatch
  auto fixed = back;
  for (auto& e : fixed) e.checksum = file_crc32(dir / "slices/sub-001.npy");
  const auto ds = load_slices(dir, fixed, "train", 7);
  CHECK(ds.size() == 3);
  CHECK(ds.conditions.c() == 7);
  CHECK(ds.targets.c() == 1);
}
