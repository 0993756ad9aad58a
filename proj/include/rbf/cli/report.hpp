#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "rbf/core/error.hpp"

namespace rbf::cli {

// Round-trip exact decimal text of a double.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream openOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

inline double meanOf(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double medianOf(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Equal-width bins over [0, max]; each bin keeps its count and the sum of the
// values that fell in it.
struct Histogram {
  double width = 1.0;
  std::vector<long> counts;
  std::vector<double> sums;

  long total() const {
    long n = 0;
    for (long c : counts) n += c;
    return n;
  }
  double weightedMean() const {
    double s = 0.0;
    for (double x : sums) s += x;
    return s / static_cast<double>(total());
  }
};

inline Histogram makeHistogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(static_cast<size_t>(bins), 0);
  h.sums.assign(static_cast<size_t>(bins), 0.0);
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  h.width = hi > 0.0 ? hi / bins : 1.0;
  for (double v : values) {
    const auto b = std::min(static_cast<size_t>(v / h.width), static_cast<size_t>(bins - 1));
    ++h.counts[b];
    h.sums[b] += v;
  }
  return h;
}

inline void writeHistogramCsv(const std::string& path, const Histogram& h) {
  auto out = openOut(path);
  out << "bin_low,bin_high,count,sum\n";
  for (size_t b = 0; b < h.counts.size(); ++b) {
    out << num(h.width * static_cast<double>(b)) << ',' << num(h.width * static_cast<double>(b + 1)) << ',' << h.counts[b] << ','
        << num(h.sums[b]) << '\n';
  }
}

namespace svg {

struct Frame {
  double left = 70, right = 20, top = 40, bottom = 55, width = 640, height = 400;
  double plotW() const { return width - left - right; }
  double plotH() const { return height - top - bottom; }
};

inline std::string header(const Frame& f, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(f.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";
  return s;
}

inline std::string line(double x1, double y1, double x2, double y2, const std::string& stroke, double w = 1.0,
                        const std::string& extra = "") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke +
         "\" stroke-width=\"" + num(w) + "\"" + extra + "/>\n";
}

inline std::string text(double x, double y, const std::string& t, const std::string& anchor = "middle", const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" + t + "</text>\n";
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Axes with five ticks on each.
inline std::string axes(const Frame& f, double xMax, double yMax, const std::string& xLabel, const std::string& yLabel) {
  const double x0 = f.left, y0 = f.top + f.plotH();
  std::string s = line(x0, y0, x0 + f.plotW(), y0, "black") + line(x0, y0, x0, f.top, "black");
  for (int i = 0; i <= 5; ++i) {
    const double fx = x0 + f.plotW() * i / 5.0, fy = y0 - f.plotH() * i / 5.0;
    s += line(fx, y0, fx, y0 + 4, "black") + text(fx, y0 + 17, label(xMax * i / 5.0));
    s += line(x0 - 4, fy, x0, fy, "black") + text(x0 - 7, fy + 4, label(yMax * i / 5.0), "end");
  }
  s += text(x0 + f.plotW() / 2, f.height - 12, xLabel);
  s += text(16, f.top + f.plotH() / 2, yLabel, "middle", " transform=\"rotate(-90 16 " + num(f.top + f.plotH() / 2) + ")\"");
  return s;
}

}  // namespace svg

// Bars per bin and a vertical line at the mean.
inline void writeHistogramSvg(const std::string& path, const Histogram& h, double mean, const std::string& title,
                              const std::string& xLabel) {
  const svg::Frame f;
  long peak = 1;
  for (long c : h.counts) peak = std::max(peak, c);
  const double xMax = h.width * static_cast<double>(h.counts.size());
  std::string s = svg::header(f, title) + svg::axes(f, xMax, static_cast<double>(peak), xLabel, "count");
  const double bw = f.plotW() / static_cast<double>(h.counts.size());
  for (size_t b = 0; b < h.counts.size(); ++b) {
    const double bh = f.plotH() * static_cast<double>(h.counts[b]) / static_cast<double>(peak);
    s += "<rect x=\"" + num(f.left + bw * static_cast<double>(b)) + "\" y=\"" + num(f.top + f.plotH() - bh) + "\" width=\"" +
         num(bw) + "\" height=\"" + num(bh) + "\" fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
  }
  const double mx = f.left + f.plotW() * mean / xMax;
  s += svg::line(mx, f.top, mx, f.top + f.plotH(), "crimson", 2.0, " stroke-dasharray=\"6 3\"");
  s += svg::text(mx + 5, f.top + 14, "mean " + svg::label(mean), "start", " fill=\"crimson\"");
  s += "</svg>\n";
  openOut(path) << s;
}

struct Series {
  std::string name;
  std::string colour;
  std::vector<double> values;
};

// Grouped bars, one group per category.
inline void writeGroupedBarsSvg(const std::string& path, const std::vector<std::string>& categories, const std::vector<Series>& series,
                                const std::string& title, const std::string& xLabel, const std::string& yLabel) {
  const svg::Frame f;
  double peak = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v)) peak = std::max(peak, v);
    }
  }
  if (!(peak > 0.0)) peak = 1.0;
  std::string s = svg::header(f, title);
  const double x0 = f.left, y0 = f.top + f.plotH();
  s += svg::line(x0, y0, x0 + f.plotW(), y0, "black") + svg::line(x0, y0, x0, f.top, "black");
  for (int i = 0; i <= 5; ++i) {
    const double fy = y0 - f.plotH() * i / 5.0;
    s += svg::line(x0 - 4, fy, x0, fy, "black") + svg::text(x0 - 7, fy + 4, svg::label(peak * i / 5.0), "end");
  }
  const double gw = f.plotW() / static_cast<double>(categories.size());
  const double bw = 0.8 * gw / static_cast<double>(series.size());
  for (size_t c = 0; c < categories.size(); ++c) {
    const double gx = x0 + gw * static_cast<double>(c) + 0.1 * gw;
    s += svg::text(x0 + gw * (static_cast<double>(c) + 0.5), y0 + 17, categories[c]);
    for (size_t k = 0; k < series.size(); ++k) {
      const double v = series[k].values[c];
      if (!std::isfinite(v)) continue;
      const double bh = f.plotH() * v / peak;
      s += "<rect x=\"" + num(gx + bw * static_cast<double>(k)) + "\" y=\"" + num(y0 - bh) + "\" width=\"" + num(bw) +
           "\" height=\"" + num(bh) + "\" fill=\"" + series[k].colour + "\"/>\n";
    }
  }
  for (size_t k = 0; k < series.size(); ++k) {
    const double ly = f.top + 4 + 16.0 * static_cast<double>(k);
    s += "<rect x=\"" + num(x0 + f.plotW() - 150) + "\" y=\"" + num(ly) + "\" width=\"10\" height=\"10\" fill=\"" +
         series[k].colour + "\"/>\n";
    s += svg::text(x0 + f.plotW() - 135, ly + 9, series[k].name, "start");
  }
  s += svg::text(x0 + f.plotW() / 2, f.height - 12, xLabel);
  s += svg::text(16, f.top + f.plotH() / 2, yLabel, "middle", " transform=\"rotate(-90 16 " + num(f.top + f.plotH() / 2) + ")\"");
  s += "</svg>\n";
  openOut(path) << s;
}

}  // namespace rbf::cli
