#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hdc {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares through (x, y). Needs two or more points and
/// at least two distinct x values.
LineFit least_squares(std::span<const double> x, std::span<const double> y);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Reads either a training loss log (header step,epoch,d_loss,g_loss;
/// yields the d_loss and g_loss series over step) or a two-column
/// numeric CSV with a one-line header (one series named by the second
/// column, x from the first). Malformed rows report their line number.
std::vector<Series> load_curve_csv(const std::filesystem::path& path);

/// One row per point: series,x,y.
void write_tidy_csv(const std::vector<Series>& series,
                    const std::filesystem::path& path);

/// Self-contained SVG line plot of all series with axes and, per
/// series, its dashed least-squares line.
void write_svg_plot(const std::vector<Series>& series,
                    const std::filesystem::path& path,
                    const std::string& title = "");

/// Per-series least-squares fits as JSON.
void write_fit_json(const std::vector<Series>& series,
                    const std::filesystem::path& path);

struct CurveOutputs {
  std::filesystem::path tidy_csv;
  std::filesystem::path svg;
  std::filesystem::path fit_json;
};

/// Loads input_csv and writes <out_base>_tidy.csv, <out_base>.svg and
/// <out_base>_fit.json next to each other.
CurveOutputs emit_curves(const std::filesystem::path& input_csv,
                         const std::filesystem::path& out_base);

}  // namespace hdc
