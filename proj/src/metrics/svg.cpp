#include "gresynth/metrics/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gresynth/error.hpp"

namespace gresynth::metrics::svg {

namespace {

constexpr double kWidth = 720, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 80;
const char* const kPalette[] = {"#4878a8", "#e08a3c", "#5a9e5a", "#c44e52", "#8172b2", "#937860"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Axis {
  double lo, hi;
  double y(double v) const {
    return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - lo) / (hi - lo));
  }
};

Axis make_axis(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void frame(std::ostringstream& o, const std::string& title, const std::string& y_label,
           const Axis& ax) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  o << "<text transform=\"translate(18," << (kTop + kHeight - kBottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
    << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ax.lo + (ax.hi - ax.lo) * i / 5.0;
    const double y = ax.y(v);
    o << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << num(y) << "\" x2=\"" << kLeft << "\" y2=\""
      << num(y) << "\" stroke=\"black\"/>\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << buf
      << "</text>\n";
  }
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

std::vector<double> finite(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

}  // namespace

std::string box_plot(const std::string& title, const std::string& y_label,
                     const std::vector<Series>& series) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : finite(s.values)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  const Axis ax = make_axis(lo, hi);
  std::ostringstream o;
  frame(o, title, y_label, ax);
  const double slot = (kWidth - kLeft - kRight) / std::max<std::size_t>(1, series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(30.0, slot * 0.3);
    const char* color = kPalette[i % 6];
    o << "<text x=\"" << num(cx) << "\" y=\"" << kHeight - kBottom + 18
      << "\" text-anchor=\"middle\">" << escape(series[i].label) << "</text>\n";
    const auto v = finite(series[i].values);
    if (v.empty()) continue;
    const double q1 = quantile(v, 0.25), med = quantile(v, 0.5), q3 = quantile(v, 0.75);
    const double iqr = q3 - q1;
    double wlo = q3, whi = q1;
    for (double x : v) {
      if (x >= q1 - 1.5 * iqr) wlo = std::min(wlo, x);
      if (x <= q3 + 1.5 * iqr) whi = std::max(whi, x);
    }
    o << "<line x1=\"" << num(cx) << "\" y1=\"" << num(ax.y(wlo)) << "\" x2=\"" << num(cx)
      << "\" y2=\"" << num(ax.y(whi)) << "\" stroke=\"black\"/>\n";
    o << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(ax.y(q3)) << "\" width=\""
      << num(2 * half) << "\" height=\"" << num(std::max(0.5, ax.y(q1) - ax.y(q3)))
      << "\" fill=\"" << color << "\" fill-opacity=\"0.6\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(ax.y(med)) << "\" x2=\""
      << num(cx + half) << "\" y2=\"" << num(ax.y(med)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double x : v)
      if (x < wlo || x > whi)
        o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(ax.y(x)) << "\" r=\"2.5\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::string>& categories, const std::vector<Series>& series) {
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (double v : finite(s.values)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const Axis ax = make_axis(lo, hi);
  std::ostringstream o;
  frame(o, title, y_label, ax);
  const double group = (kWidth - kLeft - kRight) / std::max<std::size_t>(1, categories.size());
  const double bar = group * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group * static_cast<double>(c) + group * 0.1;
    o << "<text x=\"" << num(gx + group * 0.4) << "\" y=\"" << kHeight - kBottom + 16
      << "\" text-anchor=\"end\" transform=\"rotate(-35 " << num(gx + group * 0.4) << " "
      << kHeight - kBottom + 16 << ")\">" << escape(categories[c]) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
      const double v = series[s].values[c];
      const double y0 = ax.y(0.0), y1 = ax.y(v);
      o << "<rect x=\"" << num(gx + bar * static_cast<double>(s)) << "\" y=\"" << num(std::min(y0, y1))
        << "\" width=\"" << num(bar * 0.9) << "\" height=\"" << num(std::abs(y1 - y0))
        << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = kTop + 14.0 * static_cast<double>(s);
    o << "<rect x=\"" << kWidth - 150 << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[s % 6] << "\"/><text x=\"" << kWidth - 135 << "\" y=\"" << num(y) << "\">"
      << escape(series[s].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write(const std::string& path, const std::string& svg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << svg;
}

}  // namespace gresynth::metrics::svg
