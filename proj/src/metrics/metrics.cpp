#include "gresynth/metrics/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <string>

#include "gresynth/error.hpp"

namespace gresynth::metrics {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": inputs differ in size (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  if (a == 0) throw DataError(std::string(what) + ": empty input");
}

}  // namespace

double psnr(std::span<const float> ref, std::span<const float> test, double max_value) {
  require_same_size(ref.size(), test.size(), "psnr");
  if (!(max_value > 0.0)) throw ParameterError("psnr: max_value must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - test[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

bool is_infinite_psnr(double db) { return std::isinf(db) && db > 0; }

std::vector<double> gaussian_window(int size, double sigma) {
  if (size < 1 || !(sigma > 0.0)) throw ParameterError("gaussian window needs size >= 1 and sigma > 0");
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

namespace {

/// Valid-mode separable filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(std::span<const float> ref, std::span<const float> test, int height, int width,
            const SsimParams& p) {
  require_same_size(ref.size(), test.size(), "ssim");
  if (static_cast<std::size_t>(height) * width != ref.size())
    throw ShapeError("ssim: image size does not match height x width");
  if (height < p.window || width < p.window)
    throw ParameterError("ssim: " + std::to_string(height) + "x" + std::to_string(width) +
                         " image is smaller than the " + std::to_string(p.window) + "-pixel window");
  if (!(p.dynamic_range > 0.0)) throw ParameterError("ssim: dynamic range must be positive");
  const auto g = gaussian_window(p.window, p.sigma);
  const std::size_t n = ref.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = ref[i];
    y[i] = test[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, height, width, g);
  const auto my = filter_valid(y, height, width, g);
  const auto sxx = filter_valid(xx, height, width, g);
  const auto syy = filter_valid(yy, height, width, g);
  const auto sxy = filter_valid(xy, height, width, g);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

DiceResult dice(std::span<const float> g, std::span<const float> s) {
  require_same_size(g.size(), s.size(), "dice");
  std::size_t ng = 0, ns = 0, both = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float a = g[i], b = s[i];
    if ((a != 0.0f && a != 1.0f) || (b != 0.0f && b != 1.0f))
      throw DataError("dice: masks must be binary (found " + std::to_string(a != 0.0f && a != 1.0f ? a : b) + ")");
    ng += a == 1.0f;
    ns += b == 1.0f;
    both += a == 1.0f && b == 1.0f;
  }
  if (ng + ns == 0) return {1.0, true};
  return {2.0 * static_cast<double>(both) / static_cast<double>(ng + ns), false};
}

IccResult icc2k(std::span<const double> r, int n, int k, IccForm form) {
  if (n < 2 || k < 2) throw ParameterError("icc2k needs at least 2 subjects and 2 raters");
  if (r.size() != static_cast<std::size_t>(n) * k)
    throw ShapeError("icc2k: ratings size does not match subjects x raters");
  for (double v : r)
    if (!std::isfinite(v)) throw DataError("icc2k: missing or non-finite rating");
  std::vector<double> row(static_cast<std::size_t>(n), 0.0), col(static_cast<std::size_t>(k), 0.0);
  double grand = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const double v = r[static_cast<std::size_t>(i) * k + j];
      row[static_cast<std::size_t>(i)] += v;
      col[static_cast<std::size_t>(j)] += v;
      grand += v;
    }
  for (auto& v : row) v /= k;
  for (auto& v : col) v /= n;
  grand /= static_cast<double>(n) * k;
  double ssr = 0.0, ssc = 0.0, sse = 0.0;
  for (double v : row) ssr += (v - grand) * (v - grand);
  for (double v : col) ssc += (v - grand) * (v - grand);
  ssr *= k;
  ssc *= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const double e = r[static_cast<std::size_t>(i) * k + j] - row[static_cast<std::size_t>(i)] -
                       col[static_cast<std::size_t>(j)] + grand;
      sse += e * e;
    }
  IccResult out;
  out.ms_rows = ssr / (n - 1);
  out.ms_cols = ssc / (k - 1);
  out.ms_error = sse / (static_cast<double>(n - 1) * (k - 1));
  const double den = form == IccForm::AbsoluteAgreement
                         ? out.ms_rows + (out.ms_cols - out.ms_error) / n
                         : out.ms_rows;
  if (out.ms_rows == 0.0 || den == 0.0) {
    out.degenerate = true;
    out.value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.value = (out.ms_rows - out.ms_error) / den;
  return out;
}

double relative_volume_error(double v_model, double v_gt) {
  if (!(v_gt > 0.0)) throw DataError("relative volume error needs a positive reference volume");
  return (v_model - v_gt) / v_gt * 100.0;
}

double bonferroni_threshold(int m, double alpha) {
  if (m < 1) throw ParameterError("Bonferroni correction needs m >= 1");
  return alpha / m;
}

double wilcoxon_exact_upper(const std::vector<double>& ranks, double w) {
  // Ranks are multiples of 1/2, so doubled ranks are integers.
  std::vector<int> r2;
  int total = 0;
  for (double r : ranks) {
    r2.push_back(static_cast<int>(std::lround(2.0 * r)));
    total += r2.back();
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  int reach = 0;
  for (int v : r2) {
    for (int s = reach; s >= 0; --s)
      if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + v)] += count[static_cast<std::size_t>(s)];
    reach += v;
  }
  const long target = std::lround(2.0 * w);
  double hits = 0.0;
  for (long s = std::max(0L, target); s <= total; ++s) hits += count[static_cast<std::size_t>(s)];
  return hits / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

PairedTestReport paired_tests(std::span<const double> a, std::span<const double> b,
                              int correction_m, double alpha) {
  if (a.size() != b.size()) throw ShapeError("paired tests need samples of equal length");
  if (a.size() < 5) throw ParameterError("paired tests need at least 5 pairs");
  PairedTestReport rep;
  rep.n = static_cast<int>(a.size());
  rep.threshold = alpha;
  rep.bonferroni_threshold = bonferroni_threshold(correction_m, alpha);

  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  rep.mean_difference = mean;
  rep.t_df = n - 1;
  if (sd == 0.0) {
    rep.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    rep.t_p = mean == 0.0 ? 1.0 : 0.0;
  } else {
    rep.t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(rep.t_df);
    rep.t_p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(rep.t)));
  }

  std::vector<double> nz;
  for (double v : d)
    if (v != 0.0) nz.push_back(v);
  rep.wilcoxon_zeros = static_cast<int>(d.size() - nz.size());
  if (nz.empty()) {
    rep.wilcoxon_degenerate = true;
  } else {
    std::vector<std::size_t> order(nz.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return std::abs(nz[i]) < std::abs(nz[j]); });
    std::vector<double> ranks(nz.size());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
    double w = 0.0, total = 0.0;
    for (std::size_t i = 0; i < nz.size(); ++i) {
      total += ranks[i];
      if (nz[i] > 0) w += ranks[i];
    }
    rep.w_plus = w;
    const double m = static_cast<double>(nz.size());
    if (static_cast<int>(nz.size()) <= kWilcoxonExactMax) {
      rep.wilcoxon_exact = true;
      rep.wilcoxon_p_greater = wilcoxon_exact_upper(ranks, w);
      rep.wilcoxon_p_less = wilcoxon_exact_upper(ranks, total - w);
    } else {
      const double mu = m * (m + 1) / 4.0;
      const double var = m * (m + 1) * (2 * m + 1) / 24.0 - tie_term / 48.0;
      const boost::math::normal z;
      if (var <= 0.0) {
        rep.wilcoxon_p_greater = rep.wilcoxon_p_less = 1.0;
      } else {
        const double sdw = std::sqrt(var);
        rep.wilcoxon_p_greater = boost::math::cdf(boost::math::complement(z, (w - mu - 0.5) / sdw));
        rep.wilcoxon_p_less = boost::math::cdf(z, (w - mu + 0.5) / sdw);
      }
    }
    rep.wilcoxon_p = std::min(1.0, 2.0 * std::min(rep.wilcoxon_p_greater, rep.wilcoxon_p_less));
  }
  rep.t_significant = rep.t_p < alpha;
  rep.t_significant_bonferroni = rep.t_p < rep.bonferroni_threshold;
  rep.wilcoxon_significant = !rep.wilcoxon_degenerate && rep.wilcoxon_p < alpha;
  rep.wilcoxon_significant_bonferroni =
      !rep.wilcoxon_degenerate && rep.wilcoxon_p < rep.bonferroni_threshold;
  return rep;
}

bool is_background_only(std::span<const float> slice, float background) {
  return std::all_of(slice.begin(), slice.end(), [&](float v) { return v == background; });
}

std::vector<SlicePair> slice_filter(std::vector<SlicePair> pairs, float background) {
  std::erase_if(pairs, [&](const SlicePair& p) { return is_background_only(p.gt, background); });
  return pairs;
}

}  // namespace gresynth::metrics
