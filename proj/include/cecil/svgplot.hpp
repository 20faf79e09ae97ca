#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cecil/common.hpp"

namespace cecil {

// Self-contained SVG line charts. Keeps plot emission free of any plotting
// dependency and the output diff-able under version control.
class SvgPlot {
public:
  struct Series {
    std::string label;
    std::string color;
    std::vector<double> x, y;
    bool draw_line = true;
  };

  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void add_series(Series s) { series_.push_back(std::move(s)); }

  /// Marks one point with a filled pentagon (used for selected settings).
  void mark_point(double x, double y, const std::string& color) {
    marks_.push_back({x, y, color});
  }

  void save(const std::filesystem::path& path) const {
    write_text_file(path, render());
  }

  std::string render() const {
    const double W = 640, H = 420;
    const double ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series_) {
      for (double v : s.x) {
        if (std::isfinite(v)) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
      }
      for (double v : s.y) {
        if (std::isfinite(v)) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
      }
    }
    for (const auto& m : marks_) {
      if (std::isfinite(m.x)) { xmin = std::min(xmin, m.x); xmax = std::max(xmax, m.x); }
      if (std::isfinite(m.y)) { ymin = std::min(ymin, m.y); ymax = std::max(ymax, m.y); }
    }
    if (!std::isfinite(xmin)) { xmin = 0; xmax = 1; }
    if (!std::isfinite(ymin)) { ymin = 0; ymax = 1; }
    if (xmax == xmin) { xmax = xmin + 1; xmin -= 1; }
    if (ymax == ymin) { ymax = ymin + 1; ymin -= 1; }
    double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
    xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' viewBox='0 0 " << W << " " << H << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16' "
        << "font-family='sans-serif'>" << title_ << "</text>\n";

    // axes and ticks
    svg << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='"
        << H - mb << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
      double xv = xmin + (xmax - xmin) * i / 5.0;
      double yv = ymin + (ymax - ymin) * i / 5.0;
      svg << "<line x1='" << px(xv) << "' y1='" << H - mb << "' x2='" << px(xv)
          << "' y2='" << H - mb + 5 << "' stroke='black'/>\n";
      svg << "<text x='" << px(xv) << "' y='" << H - mb + 20
          << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
          << fmt_num(xv) << "</text>\n";
      svg << "<line x1='" << ml - 5 << "' y1='" << py(yv) << "' x2='" << ml << "' y2='"
          << py(yv) << "' stroke='black'/>\n";
      svg << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
          << "' text-anchor='end' font-size='11' font-family='sans-serif'>"
          << fmt_num(yv) << "</text>\n";
    }
    svg << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
        << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << xlabel_
        << "</text>\n";
    svg << "<text x='16' y='" << (mt + H - mb) / 2
        << "' text-anchor='middle' font-size='13' font-family='sans-serif' "
        << "transform='rotate(-90 16 " << (mt + H - mb) / 2 << ")'>" << ylabel_
        << "</text>\n";

    int li = 0;
    for (const auto& s : series_) {
      if (s.draw_line && s.x.size() > 1) {
        svg << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.8' points='";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
          svg << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        svg << "'/>\n";
      }
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        svg << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
            << "' r='3' fill='" << s.color << "'/>\n";
      }
      svg << "<rect x='" << W - mr - 150 << "' y='" << mt + 18 * li << "' width='12' "
          << "height='12' fill='" << s.color << "'/>\n";
      svg << "<text x='" << W - mr - 132 << "' y='" << mt + 18 * li + 10
          << "' font-size='12' font-family='sans-serif'>" << s.label << "</text>\n";
      ++li;
    }
    for (const auto& m : marks_) {
      svg << pentagon(px(m.x), py(m.y), 7.0, m.color);
    }
    svg << "</svg>\n";
    return svg.str();
  }

private:
  struct Mark {
    double x, y;
    std::string color;
  };

  static std::string fmt_num(double v) {
    std::ostringstream ss;
    ss << std::setprecision(4) << v;
    return ss.str();
  }

  static std::string pentagon(double cx, double cy, double r, const std::string& color) {
    std::ostringstream ss;
    ss << "<polygon fill='" << color << "' stroke='black' points='";
    for (int k = 0; k < 5; ++k) {
      double a = -M_PI / 2 + 2 * M_PI * k / 5;
      ss << cx + r * std::cos(a) << "," << cy + r * std::sin(a) << " ";
    }
    ss << "'/>\n";
    return ss.str();
  }

  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
  std::vector<Mark> marks_;
};

}  // namespace cecil
