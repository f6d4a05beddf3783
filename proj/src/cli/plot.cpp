#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "pfnlab/experiment.hpp"

namespace pfnlab {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* const kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

void render_svg(const CsvTable& table, const PlotOptions& options,
                const std::filesystem::path& path) {
  if (options.y_columns.empty()) throw IoError("plot: no y columns selected");
  const std::vector<double> xs = csv_column(table, options.x_column);
  std::vector<std::vector<double>> ys;
  for (const auto& c : options.y_columns) ys.push_back(csv_column(table, c));

  auto tx = [&](double v) { return options.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return options.log_y ? std::log10(v) : v; };
  auto usable_x = [&](double v) { return std::isfinite(v) && (!options.log_x || v > 0.0); };
  auto usable_y = [&](double v) { return std::isfinite(v) && (!options.log_y || v > 0.0); };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!usable_x(xs[i])) continue;
    for (const auto& col : ys) {
      if (!usable_y(col[i])) continue;
      x0 = std::min(x0, tx(xs[i]));
      x1 = std::max(x1, tx(xs[i]));
      y0 = std::min(y0, ty(col[i]));
      y1 = std::max(y1, ty(col[i]));
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + ph - (ty(v) - y0) / (y1 - y0) * ph; };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << esc(options.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double vx = options.log_x ? std::pow(10.0, fx) : fx;
    const double vy = options.log_y ? std::pow(10.0, fy) : fy;
    const double sx = kLeft + pw * k / 4.0, sy = kTop + ph - ph * k / 4.0;
    char lx[32], ly[32];
    std::snprintf(lx, sizeof lx, "%.3g", vx);
    std::snprintf(ly, sizeof ly, "%.3g", vy);
    out << "<text x=\"" << sx << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << lx
        << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << ly
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << esc(options.x_column) << "</text>\n";

  for (std::size_t c = 0; c < ys.size(); ++c) {
    const char* colour = kColours[c % std::size(kColours)];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (usable_x(xs[i]) && usable_y(ys[c][i])) out << px(xs[i]) << ',' << py(ys[c][i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 16 + 16 * static_cast<double>(c)
        << "\" fill=\"" << colour << "\">" << esc(options.y_columns[c]) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace pfnlab
