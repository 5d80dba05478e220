#include "gresynth/data/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"

namespace gresynth::data {
namespace {

constexpr double kPi = std::numbers::pi;

// Nominal placement of the left member of each deep structure, in brain
// coordinates normalized to [-1, 1] per axis: center (x, y) and semi-axes.
struct Placement {
  double cx, cy;
  double ax, ay, az;
};
const std::array<Placement, 7> kPlacements{{
    {-0.14, -0.10, 0.10, 0.14, 0.40},  // thalamus
    {-0.22, 0.27, 0.06, 0.11, 0.40},   // caudate
    {-0.38, 0.10, 0.05, 0.15, 0.40},   // putamen
    {-0.27, 0.10, 0.035, 0.07, 0.30},  // pallidum
    {-0.40, -0.42, 0.06, 0.12, 0.30},  // hippocampus
    {-0.36, -0.17, 0.05, 0.06, 0.30},  // amygdala
    {-0.10, 0.45, 0.04, 0.05, 0.30},   // accumbens
}};

struct Ellipsoid {
  double cx, cy, cz;  // voxel units
  double ax, ay, az;
  double value(double x, double y, double z) const {
    const double u = (x - cx) / ax, v = (y - cy) / ay, w = (z - cz) / az;
    return u * u + v * v + w * w;
  }
};

}  // namespace

const std::vector<TissueClass>& tissue_classes() {
  static const std::vector<TissueClass> classes{
      {"white_matter", 2, 41, 800.0, 0.030, -0.030, 0.85},
      {"cortex", 3, 42, 1000.0, 0.020, 0.000, 0.55},
      {"thalamus", 10, 49, 900.0, 0.028, 0.020, 0.72},
      {"caudate", 11, 50, 980.0, 0.032, 0.080, 0.60},
      {"putamen", 12, 51, 950.0, 0.040, 0.100, 0.63},
      {"pallidum", 13, 52, 850.0, 0.060, 0.180, 0.78},
      {"hippocampus", 17, 53, 1020.0, 0.022, 0.010, 0.52},
      {"amygdala", 18, 54, 1010.0, 0.024, 0.020, 0.54},
      {"accumbens", 26, 58, 990.0, 0.030, 0.040, 0.58},
  };
  return classes;
}

const std::vector<double>& echo_times_ms() {
  static const std::vector<double> tes{6.61, 12.85, 19.09, 25.33, 31.57};
  return tes;
}

double t1w_intensity(std::size_t cls, double r2star) {
  return tissue_classes().at(cls).t1 + kT1wR2starSlope * r2star;
}

const std::vector<std::string>& phantom_file_names() {
  static const std::vector<std::string> names{"echo1.nii", "echo2.nii", "echo3.nii",
                                              "echo4.nii", "echo5.nii", "qsm.nii",
                                              "r2star.nii", "t1w.nii", "labels.nii"};
  return names;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x70686eu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& config) {
  if (config.grid_size < 32) throw ParameterError("phantom grid_size must be at least 32");
  if (config.depth < 4) throw ParameterError("phantom depth must be at least 4");
  if (config.n_structures < 0 || config.n_structures > static_cast<int>(kPlacements.size()))
    throw ParameterError("n_structures " + std::to_string(config.n_structures) +
                         " exceeds packing capacity of " + std::to_string(kPlacements.size()));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int nx = config.grid_size, ny = config.grid_size, nz = config.depth;
  const double cx = 0.5 * (nx - 1), cy = 0.5 * (ny - 1), cz = 0.5 * (nz - 1);
  const double hx = 0.5 * nx, hy = 0.5 * ny, hz = 0.5 * nz;

  // Subject-level anatomy.
  const Ellipsoid brain{cx, cy, cz, 0.80 * hx * (1.0 + 0.05 * uni(rng)),
                        0.88 * hy * (1.0 + 0.05 * uni(rng)), 0.95 * hz * (1.0 + 0.03 * uni(rng))};
  const double shell = 0.13 + 0.02 * uni(rng);
  const double gyri_amp = 0.04 + 0.02 * uni(rng);
  const double gyri_freq = 7.0 + std::round(2.0 * uni(rng));
  const double gyri_phase = kPi * uni(rng);

  // Tissue properties with subject jitter.
  auto classes = tissue_classes();
  const double s0_scale = 1.0 + 0.1 * uni(rng);
  for (auto& c : classes) {
    c.s0 *= s0_scale * (1.0 + 0.02 * normal(rng));
    c.r2star *= 1.0 + 0.05 * normal(rng);
    c.chi += 0.01 * normal(rng);
  }

  // Smooth multiplicative R2* field, a sum of three low-frequency plane waves.
  std::array<std::array<double, 4>, 3> waves{};
  for (auto& w : waves) w = {0.5 + 0.5 * (uni(rng) + 1.0), 0.5 + 0.5 * (uni(rng) + 1.0),
                             0.5 * (uni(rng) + 1.0), kPi * uni(rng)};
  const double field_amp = 0.08;
  auto field = [&](double u, double v, double w) {
    double s = 0.0;
    for (const auto& k : waves) s += std::sin(kPi * (k[0] * u + k[1] * v + k[2] * w) + k[3]);
    return field_amp * s / 3.0;
  };

  // Class index per voxel (-1 background), with hemisphere.
  std::vector<int> cls(static_cast<std::size_t>(nx) * ny * nz, -1);
  std::vector<char> right(cls.size(), 0);
  Volume labels(nx, ny, nz);
  auto idx = [&](int x, int y, int z) { return labels.index(x, y, z); };

  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const double r2 = brain.value(x, y, z);
        if (r2 > 1.0) continue;
        const double theta = std::atan2((y - cy) / brain.ay, (x - cx) / brain.ax);
        const double inner = 1.0 - shell + gyri_amp * std::sin(gyri_freq * theta + gyri_phase);
        const std::size_t i = idx(x, y, z);
        cls[i] = std::sqrt(r2) > inner ? 1 : 0;
        right[i] = x > cx ? 1 : 0;
      }

  // Deep structures: jittered nominal placement, mirrored across the midline,
  // rejected if they come within a voxel of another structure or leave the
  // white matter.
  std::vector<char> occupied(cls.size(), 0);
  auto try_place = [&](const Ellipsoid& left, int label_class) {
    const Ellipsoid mirror{2.0 * cx - left.cx, left.cy, left.cz, left.ax, left.ay, left.az};
    std::vector<std::size_t> voxels;
    for (const Ellipsoid* e : {&left, &mirror}) {
      const int x0 = std::max(0, static_cast<int>(std::floor(e->cx - e->ax - 1.0)));
      const int x1 = std::min(nx - 1, static_cast<int>(std::ceil(e->cx + e->ax + 1.0)));
      const int y0 = std::max(0, static_cast<int>(std::floor(e->cy - e->ay - 1.0)));
      const int y1 = std::min(ny - 1, static_cast<int>(std::ceil(e->cy + e->ay + 1.0)));
      const int z0 = std::max(0, static_cast<int>(std::floor(e->cz - e->az - 1.0)));
      const int z1 = std::min(nz - 1, static_cast<int>(std::ceil(e->cz + e->az + 1.0)));
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            // One-voxel margin: test against a slightly inflated ellipsoid.
            const double u = (x - e->cx) / (e->ax + 1.0), v = (y - e->cy) / (e->ay + 1.0),
                         w = (z - e->cz) / (e->az + 1.0);
            if (u * u + v * v + w * w > 1.0) continue;
            const std::size_t i = idx(x, y, z);
            if (occupied[i]) return false;
            if (e->value(x, y, z) <= 1.0) {
              if (cls[i] != 0) return false;
              voxels.push_back(i);
            }
          }
    }
    if (voxels.empty()) return false;
    for (std::size_t i : voxels) {
      occupied[i] = 1;
      cls[i] = label_class;
    }
    return true;
  };

  for (int s = 0; s < config.n_structures; ++s) {
    const Placement& p = kPlacements[static_cast<std::size_t>(s)];
    const double ax = std::max(1.0, p.ax * brain.ax * (1.0 + 0.1 * uni(rng)));
    const double ay = std::max(1.0, p.ay * brain.ay * (1.0 + 0.1 * uni(rng)));
    const double az = std::max(1.0, p.az * brain.az * (1.0 + 0.1 * uni(rng)));
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      const double spread = 0.02 + 0.004 * attempt;
      placed = try_place({cx + (p.cx + spread * uni(rng)) * brain.ax,
                          cy + (p.cy + spread * uni(rng)) * brain.ay,
                          cz + 0.05 * uni(rng) * brain.az, ax, ay, az},
                         2 + s);
    }
    // Fall back to the free position nearest the nominal center.
    if (!placed) {
      std::vector<std::pair<double, std::array<int, 3>>> candidates;
      const double px = cx + p.cx * brain.ax, py = cy + p.cy * brain.ay;
      for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
          for (int x = 0; x <= static_cast<int>(cx); ++x)
            if (cls[idx(x, y, z)] == 0)
              candidates.push_back({(x - px) * (x - px) + (y - py) * (y - py) + (z - cz) * (z - cz),
                                    {x, y, z}});
      std::sort(candidates.begin(), candidates.end());
      for (const auto& [d, c] : candidates) {
        if (try_place({static_cast<double>(c[0]), static_cast<double>(c[1]),
                       static_cast<double>(c[2]), ax, ay, az},
                      2 + s)) {
          placed = true;
          break;
        }
      }
    }
    if (!placed)
      throw ParameterError("cannot pack " + std::to_string(config.n_structures) +
                           " structures into a " + std::to_string(nx) + "x" + std::to_string(ny) +
                           "x" + std::to_string(nz) + " grid");
  }

  Phantom ph;
  const std::array<double, 3> spacing{256.0 / nx, 256.0 / ny, 160.0 / nz};
  auto make = [&](Modality m) {
    Volume v(nx, ny, nz);
    v.spacing = spacing;
    v.reset_affine();
    v.modality = m;
    return v;
  };
  ph.qsm = make(Modality::Qsm);
  ph.r2star = make(Modality::R2star);
  ph.t1w = make(Modality::T1w);
  ph.labels = make(Modality::Labels);
  ph.brain_mask = make(Modality::Mask);
  const auto& tes = echo_times_ms();
  for (double te : tes) {
    Volume e = make(Modality::Echo);
    e.echo_time_ms = te;
    ph.echoes.push_back(std::move(e));
  }
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const std::size_t i = idx(x, y, z);
        if (cls[i] < 0) continue;
        const auto c = static_cast<std::size_t>(cls[i]);
        const TissueClass& tc = classes[c];
        const double r2 = tc.r2star * (1.0 + field((x - cx) / hx, (y - cy) / hy, (z - cz) / hz));
        ph.r2star.data[i] = static_cast<float>(r2);
        ph.qsm.data[i] = static_cast<float>(tc.chi);
        ph.t1w.data[i] = static_cast<float>(t1w_intensity(c, r2));
        ph.labels.data[i] = static_cast<float>(right[i] ? tc.right_code : tc.left_code);
        ph.brain_mask.data[i] = 1.0f;
        for (std::size_t e = 0; e < tes.size(); ++e)
          ph.echoes[e].data[i] = static_cast<float>(tc.s0 * std::exp(-tes[e] * r2));
      }
  return ph;
}

void write_phantom(const std::filesystem::path& dir, const Phantom& p) {
  std::filesystem::create_directories(dir);
  const auto& names = phantom_file_names();
  for (std::size_t e = 0; e < p.echoes.size(); ++e) io::write_nifti(dir / names[e], p.echoes[e]);
  io::write_nifti(dir / names[5], p.qsm);
  io::write_nifti(dir / names[6], p.r2star);
  io::write_nifti(dir / names[7], p.t1w);
  io::write_nifti(dir / names[8], p.labels);
}

}  // namespace gresynth::data
