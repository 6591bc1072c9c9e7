#include "ntkdip/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ntkdip {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgPlot::add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("SvgPlot: xs/ys size mismatch");
  series_.push_back({std::move(name), std::move(xs), std::move(ys)});
}

void SvgPlot::write(const std::filesystem::path& path) const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series_) {
    for (double x : s.xs) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
    for (double y : s.ys) {
      const double v = log_y_ ? std::log10(std::max(y, 1e-300)) : y;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmin < xmax)) xmax = xmin + 1.0;
  if (!(ymin < ymax)) ymax = ymin + 1.0;

  const double plot_w = kWidth - kMarginL - kMarginR;
  const double plot_h = kHeight - kMarginT - kMarginB;
  auto px = [&](double x) { return kMarginL + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) {
    const double v = log_y_ ? std::log10(std::max(y, 1e-300)) : y;
    return kMarginT + plot_h - (v - ymin) / (ymax - ymin) * plot_h;
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"monospace\" font-size=\"12\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title_ << "</text>\n";

  // axes
  out << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT + plot_h << "\" x2=\""
      << kMarginL + plot_w << "\" y2=\"" << kMarginT + plot_h
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
      << "\" y2=\"" << kMarginT + plot_h << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // ticks, 5 per axis
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double gy = ymin + (ymax - ymin) * i / 4.0;
    const double tick_y_val = log_y_ ? std::pow(10.0, gy) : gy;
    out << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << kMarginT + plot_h + 18
        << "\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
    out << "<text x=\"" << kMarginL - 6 << "\" y=\""
        << fmt(kMarginT + plot_h - (gy - ymin) / (ymax - ymin) * plot_h + 4)
        << "\" text-anchor=\"end\">" << (log_y_ ? "1e" + fmt(gy) : fmt(tick_y_val))
        << "</text>\n";
  }
  out << "<text x=\"" << kMarginL + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << x_label_ << "</text>\n";
  out << "<text x=\"16\" y=\"" << kMarginT + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kMarginT + plot_h / 2
      << ")\">" << y_label_ << "</text>\n";

  for (std::size_t s = 0; s < series_.size(); ++s) {
    const auto& ser = series_[s];
    out << "<polyline fill=\"none\" stroke=\"" << kColors[s % 6]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ser.xs.size(); ++i) {
      if (i) out << " ";
      out << fmt(px(ser.xs[i])) << "," << fmt(py(ser.ys[i]));
    }
    out << "\"/>\n";
    out << "<text x=\"" << kMarginL + plot_w - 4 << "\" y=\""
        << kMarginT + 14 + 16 * static_cast<int>(s) << "\" text-anchor=\"end\" fill=\""
        << kColors[s % 6] << "\">" << ser.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ntkdip
