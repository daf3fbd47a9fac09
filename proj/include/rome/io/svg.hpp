#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace rome::io::svg {

struct Series {
  std::string name;
  std::vector<double> values;
};

namespace detail {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 90;

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[k % 8];
}

inline std::string f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double lo, hi;
  double y(double v) const { return kTop + (kHeight - kTop - kBottom) * (hi - v) / (hi - lo); }
};

inline Frame frame(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string open(const std::string& title, const std::string& ylabel, const Frame& fr) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(kWidth) + "\" height=\"" + f(kHeight) + "\" viewBox=\"0 0 " +
                  f(kWidth) + " " + f(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + f(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
  s += "<text transform=\"translate(16," + f((kTop + kHeight - kBottom) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + escape(ylabel) +
       "</text>\n";
  s += "<line x1=\"" + f(kLeft) + "\" y1=\"" + f(kTop) + "\" x2=\"" + f(kLeft) + "\" y2=\"" + f(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + f(kLeft) + "\" y1=\"" + f(kHeight - kBottom) + "\" x2=\"" + f(kWidth - kRight) + "\" y2=\"" + f(kHeight - kBottom) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = fr.lo + (fr.hi - fr.lo) * k / 5.0;
    const double y = fr.y(v);
    s += "<line x1=\"" + f(kLeft - 4) + "\" y1=\"" + f(y) + "\" x2=\"" + f(kWidth - kRight) + "\" y2=\"" + f(y) +
         "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + f(kLeft - 6) + "\" y=\"" + f(y + 4) + "\" text-anchor=\"end\">" + tick_label(v) + "</text>\n";
  }
  return s;
}

inline double q7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Box-and-whisker plot (Tukey whiskers at 1.5 IQR, outliers as dots).
inline std::string box_plot(const std::string& title, const std::string& ylabel, const std::vector<Series>& boxes) {
  using namespace detail;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& b : boxes) {
    for (double v : b.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  const Frame fr = frame(lo, hi);
  std::string s = open(title, ylabel, fr);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(boxes.size(), 1));
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    std::vector<double> v;
    for (double x : boxes[k].values) {
      if (std::isfinite(x)) v.push_back(x);
    }
    const double cx = kLeft + slot * (static_cast<double>(k) + 0.5);
    const double half = std::min(30.0, slot * 0.3);
    s += "<text transform=\"translate(" + f(cx) + "," + f(kHeight - kBottom + 14) + ") rotate(35)\">" + escape(boxes[k].name) + "</text>\n";
    if (v.empty()) continue;
    const double q1 = q7(v, 0.25), med = q7(v, 0.5), q3 = q7(v, 0.75);
    const double iqr = q3 - q1;
    double wlo = q3, whi = q1;
    for (double x : v) {
      if (x >= q1 - 1.5 * iqr) wlo = std::min(wlo, x);
      if (x <= q3 + 1.5 * iqr) whi = std::max(whi, x);
    }
    const char* col = palette(k);
    s += "<line x1=\"" + f(cx) + "\" y1=\"" + f(fr.y(wlo)) + "\" x2=\"" + f(cx) + "\" y2=\"" + f(fr.y(whi)) + "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + f(cx - half) + "\" y=\"" + f(fr.y(q3)) + "\" width=\"" + f(2 * half) + "\" height=\"" + f(fr.y(q1) - fr.y(q3)) +
         "\" fill=\"" + col + "\" fill-opacity=\"0.5\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + f(cx - half) + "\" y1=\"" + f(fr.y(med)) + "\" x2=\"" + f(cx + half) + "\" y2=\"" + f(fr.y(med)) +
         "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double x : v) {
      if (x < wlo || x > whi) s += "<circle cx=\"" + f(cx) + "\" cy=\"" + f(fr.y(x)) + "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
    }
  }
  return s + "</svg>\n";
}

/// Lines over a shared x grid, one per series, with a legend.
inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel, const std::vector<double>& x,
                             const std::vector<Series>& lines) {
  using namespace detail;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& l : lines) {
    for (double v : l.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  const Frame fr = frame(lo, hi);
  double xlo = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  double xhi = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  if (!(xhi > xlo)) xlo -= 0.5, xhi += 0.5;
  auto px = [&](double v) { return kLeft + 10 + (kWidth - kLeft - kRight - 20) * (v - xlo) / (xhi - xlo); };
  std::string s = open(title, ylabel, fr);
  for (double v : x) {
    s += "<text x=\"" + f(px(v)) + "\" y=\"" + f(kHeight - kBottom + 16) + "\" text-anchor=\"middle\">" + tick_label(v) + "</text>\n";
  }
  s += "<text x=\"" + f((kLeft + kWidth - kRight) / 2) + "\" y=\"" + f(kHeight - kBottom + 36) + "\" text-anchor=\"middle\">" + escape(xlabel) +
       "</text>\n";
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const char* col = palette(k);
    std::string pts;
    for (std::size_t i = 0; i < x.size() && i < lines[k].values.size(); ++i) {
      if (!std::isfinite(lines[k].values[i])) continue;
      pts += (pts.empty() ? "" : " ") + f(px(x[i])) + "," + f(fr.y(lines[k].values[i]));
      s += "<circle cx=\"" + f(px(x[i])) + "\" cy=\"" + f(fr.y(lines[k].values[i])) + "\" r=\"3\" fill=\"" + col + "\"/>\n";
    }
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1.5\"/>\n";
    const double ly = kHeight - kBottom + 52 + 14 * static_cast<double>(k / 3);
    const double lx = kLeft + 200 * static_cast<double>(k % 3);
    s += "<line x1=\"" + f(lx) + "\" y1=\"" + f(ly - 4) + "\" x2=\"" + f(lx + 20) + "\" y2=\"" + f(ly - 4) + "\" stroke=\"" + col +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + f(lx + 26) + "\" y=\"" + f(ly) + "\">" + escape(lines[k].name) + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace rome::io::svg
