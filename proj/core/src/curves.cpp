#include "hdcgan/curves.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hdcgan/tensor.hpp"

namespace hdc {

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("x and y lengths disagree");
  if (x.size() < 2) throw Error("least squares needs at least 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0) {
    throw Error("least squares needs two distinct x values");
  }
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw Error("malformed value '" + cell + "' at line " +
                std::to_string(line_no));
  }
}

}  // namespace

std::vector<Series> load_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty curve file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);

  std::vector<Series> series;
  bool loss_log = false;
  if (header.size() == 4 && header[0] == "step" && header[1] == "epoch" &&
      header[2] == "d_loss" && header[3] == "g_loss") {
    loss_log = true;
    series.push_back({"d_loss", {}, {}});
    series.push_back({"g_loss", {}, {}});
  } else if (header.size() == 2) {
    series.push_back({header[1].empty() ? "y" : header[1], {}, {}});
  } else {
    throw Error("unrecognized curve header in " + path.string() +
                "; expected step,epoch,d_loss,g_loss or two columns");
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw Error("line " + std::to_string(line_no) + " has " +
                  std::to_string(cells.size()) + " fields, header has " +
                  std::to_string(header.size()));
    }
    if (loss_log) {
      const double step = parse_number(cells[0], line_no);
      series[0].x.push_back(step);
      series[0].y.push_back(parse_number(cells[2], line_no));
      series[1].x.push_back(step);
      series[1].y.push_back(parse_number(cells[3], line_no));
    } else {
      series[0].x.push_back(parse_number(cells[0], line_no));
      series[0].y.push_back(parse_number(cells[1], line_no));
    }
  }
  if (series[0].x.empty()) throw Error("no data rows in " + path.string());
  return series;
}

void write_tidy_csv(const std::vector<Series>& series,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "series,x,y\n";
  char line[160];
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(line, sizeof line, "%s,%.9g,%.9g\n", s.name.c_str(),
                    s.x[i], s.y[i]);
      out << line;
    }
  }
}

namespace {

struct Extent {
  double lo = 0, hi = 1;

  double clamp01(double v) const {
    return hi == lo ? 0.5 : (v - lo) / (hi - lo);
  }
};

Extent extent_of(const std::vector<Series>& series, bool of_x) {
  double lo = 1e300, hi = -1e300;
  for (const Series& s : series) {
    for (double v : of_x ? s.x : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo > hi) throw Error("no points to plot");
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_plot(const std::vector<Series>& series,
                    const std::filesystem::path& path,
                    const std::string& title) {
  if (series.empty()) throw Error("no series to plot");
  const double W = 800, H = 480;
  const double ml = 64, mr = 24, mt = title.empty() ? 24 : 40, mb = 44;
  const Extent ex = extent_of(series, true);
  const Extent ey = extent_of(series, false);
  auto px = [&](double x) { return ml + ex.clamp01(x) * (W - ml - mr); };
  auto py = [&](double y) {
    return H - mb - ey.clamp01(y) * (H - mt - mb);
  };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  if (!title.empty()) {
    out << "<text x=\"" << W / 2
        << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">"
        << title << "</text>\n";
  }
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\""
      << W - ml - mr << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = ex.lo + (ex.hi - ex.lo) * t / 4.0;
    const double fy = ey.lo + (ey.hi - ey.lo) * t / 4.0;
    out << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(fx) << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << fmt(py(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(fy) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      out << fmt(px(series[s].x[i])) << ',' << fmt(py(series[s].y[i]))
          << ' ';
    }
    out << "\"/>\n";
    if (series[s].x.size() >= 2 &&
        series[s].x.front() != series[s].x.back()) {
      const LineFit fit = least_squares(series[s].x, series[s].y);
      const double y0 = fit.intercept + fit.slope * ex.lo;
      const double y1 = fit.intercept + fit.slope * ex.hi;
      out << "<line x1=\"" << fmt(px(ex.lo)) << "\" y1=\""
          << fmt(py(std::clamp(y0, ey.lo, ey.hi))) << "\" x2=\""
          << fmt(px(ex.hi)) << "\" y2=\""
          << fmt(py(std::clamp(y1, ey.lo, ey.hi))) << "\" stroke=\""
          << color << "\" stroke-dasharray=\"6 4\" stroke-width=\"1\"/>\n";
    }
    out << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 18 + 16 * s
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
        << "\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

void write_fit_json(const std::vector<Series>& series,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  for (const Series& s : series) {
    const LineFit fit = least_squares(s.x, s.y);
    j[s.name] = {{"slope", fit.slope},
                 {"intercept", fit.intercept},
                 {"points", s.x.size()}};
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CurveOutputs emit_curves(const std::filesystem::path& input_csv,
                         const std::filesystem::path& out_base) {
  const auto series = load_curve_csv(input_csv);
  CurveOutputs files;
  files.tidy_csv = out_base.string() + "_tidy.csv";
  files.svg = out_base.string() + ".svg";
  files.fit_json = out_base.string() + "_fit.json";
  if (!out_base.parent_path().empty()) {
    std::filesystem::create_directories(out_base.parent_path());
  }
  write_tidy_csv(series, files.tidy_csv);
  write_svg_plot(series, files.svg);
  write_fit_json(series, files.fit_json);
  return files;
}

}  // namespace hdc
