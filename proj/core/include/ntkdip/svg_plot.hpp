#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ntkdip {

/// Minimal deterministic line-plot writer: fixed canvas, fixed styling,
/// polylines only. No plotting dependency, output bytes depend only on the
/// data handed in.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label);

  void add_series(std::string name, std::vector<double> xs, std::vector<double> ys);
  /// Plot the y axis on a log10 scale (values must be positive).
  void set_log_y(bool log_y) { log_y_ = log_y; }

  void write(const std::filesystem::path& path) const;

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  bool log_y_ = false;
};

}  // namespace ntkdip
