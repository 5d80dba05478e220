#pragma once
// Independent reference computations shared by the unit tests and the
// acceptance harness. None of these call into the library.
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

/// alpha_bar over the explicit linear beta array, in long double; index 0 is 1.
inline std::vector<long double> alpha_bar(int T, long double b1, long double bT) {
  std::vector<long double> ab(static_cast<std::size_t>(T) + 1, 1.0L);
  for (int t = 1; t <= T; ++t) {
    const long double beta = T == 1 ? b1 : b1 + (bT - b1) * (t - 1) / (T - 1);
    ab[static_cast<std::size_t>(t)] = ab[static_cast<std::size_t>(t) - 1] * (1.0L - beta);
  }
  return ab;
}

/// SSIM by direct convolution: explicit 11x11 Gaussian (sigma 1.5), every valid window, L = 2.
inline double ssim(const std::vector<float>& a, const std::vector<float>& b, int h, int w) {
  const int win = 11;
  const double sigma = 1.5;
  std::vector<double> g2(win * win);
  double total = 0.0;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      const double dy = y - 5, dx = x - 5;
      g2[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      total += g2[y * win + x];
    }
  for (auto& v : g2) v /= total;
  const double c1 = (0.01 * 2) * (0.01 * 2), c2 = (0.03 * 2) * (0.03 * 2);
  double sum = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + win <= h; ++y0)
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0, mb = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          const double wt = g2[y * win + x];
          ma += wt * a[(y0 + y) * w + x0 + x];
          mb += wt * b[(y0 + y) * w + x0 + x];
        }
      double va = 0, vb = 0, cov = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          const double wt = g2[y * win + x];
          const double da = a[(y0 + y) * w + x0 + x] - ma, db = b[(y0 + y) * w + x0 + x] - mb;
          va += wt * da * da;
          vb += wt * db * db;
          cov += wt * da * db;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / count;
}

/// ICC(2,k) from explicit two-way ANOVA sums of squares (n x k, row-major).
inline double icc(const std::vector<double>& m, int n, int k, bool absolute) {
  double grand = 0;
  for (double v : m) grand += v;
  grand /= n * k;
  double ssr = 0, ssc = 0, sst = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0;
    for (int j = 0; j < k; ++j) row += m[i * k + j];
    row /= k;
    ssr += k * (row - grand) * (row - grand);
  }
  for (int j = 0; j < k; ++j) {
    double col = 0;
    for (int i = 0; i < n; ++i) col += m[i * k + j];
    col /= n;
    ssc += n * (col - grand) * (col - grand);
  }
  for (double v : m) sst += (v - grand) * (v - grand);
  const double sse = sst - ssr - ssc;
  const double msr = ssr / (n - 1), msc = ssc / (k - 1), mse = sse / ((n - 1.0) * (k - 1.0));
  if (!absolute) return (msr - mse) / msr;
  return (msr - mse) / (msr + (msc - mse) / n);
}

/// Signed-rank tail probabilities by enumerating all 2^n sign patterns.
inline void wilcoxon(const std::vector<double>& d, double& p_greater, double& p_less) {
  std::vector<double> mag;
  for (double v : d)
    if (v != 0) mag.push_back(std::abs(v));
  const int n = static_cast<int>(mag.size());
  std::vector<double> rank(n);
  for (int i = 0; i < n; ++i) {
    int less = 0, equal = 0;
    for (int j = 0; j < n; ++j) {
      less += mag[j] < mag[i];
      equal += mag[j] == mag[i];
    }
    rank[i] = less + (equal + 1) / 2.0;
  }
  double observed = 0;
  for (int i = 0, r = 0; i < static_cast<int>(d.size()); ++i)
    if (d[i] != 0) {
      if (d[i] > 0) observed += rank[r];
      ++r;
    }
  long long ge = 0, le = 0;
  const long long total = 1LL << n;
  for (long long mask = 0; mask < total; ++mask) {
    double w = 0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) w += rank[i];
    ge += w >= observed - 1e-9;
    le += w <= observed + 1e-9;
  }
  p_greater = static_cast<double>(ge) / total;
  p_less = static_cast<double>(le) / total;
}

/// OLS coefficients [intercept, cols...] from the normal equations on unit-norm
/// columns, solved by Gauss-Jordan elimination in long double.
inline std::vector<double> normal_equations(const std::vector<std::vector<double>>& cols,
                                            const std::vector<double>& y) {
  const std::size_t p = cols.size() + 1, n = y.size();
  std::vector<std::vector<long double>> X(p, std::vector<long double>(n, 1.0L));
  for (std::size_t j = 1; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i) X[j][i] = cols[j - 1][i];
  std::vector<long double> scale(p);
  for (std::size_t j = 0; j < p; ++j) {
    long double s = 0;
    for (auto v : X[j]) s += v * v;
    scale[j] = std::sqrt(s);
    for (auto& v : X[j]) v /= scale[j];
  }
  std::vector<std::vector<long double>> A(p, std::vector<long double>(p + 1, 0.0L));
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b)
      for (std::size_t i = 0; i < n; ++i) A[a][b] += X[a][i] * X[b][i];
    for (std::size_t i = 0; i < n; ++i) A[a][p] += X[a][i] * y[i];
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= p; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t j = 0; j < p; ++j) beta[j] = static_cast<double>(A[j][p] / A[j][j] / scale[j]);
  return beta;
}

/// Unadjusted R^2 of the normal-equations fit.
inline double r_squared(const std::vector<std::vector<double>>& cols, const std::vector<double>& y) {
  const auto b = normal_equations(cols, y);
  double mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  double rss = 0, tss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double fit = b[0];
    for (std::size_t j = 0; j < cols.size(); ++j) fit += b[j + 1] * cols[j][i];
    rss += (y[i] - fit) * (y[i] - fit);
    tss += (y[i] - mean) * (y[i] - mean);
  }
  return 1 - rss / tss;
}

/// Iterated 6-connected dilation as set expansion: voxels within L1 distance k of a seed.
inline std::vector<std::uint8_t> l1_expand(const std::vector<std::array<int, 3>>& seeds, int nx, int ny,
                                           int nz, int k) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(nx) * ny * nz, 0);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        for (const auto& s : seeds)
          if (std::abs(s[0] - x) + std::abs(s[1] - y) + std::abs(s[2] - z) <= k) {
            out[static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)] = 1;
            break;
          }
  return out;
}

}  // namespace oracle
