#include "gsamia/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gsamia {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double roc_x_unit(double fpr, bool log_fpr, double min_fpr) {
  if (!log_fpr) return fpr;
  const double f = std::max(fpr, min_fpr);
  return (std::log10(f) - std::log10(min_fpr)) / -std::log10(min_fpr);
}

double px_x(double u, const PlotFrame& f) { return f.margin + u * (f.width - 2 * f.margin); }
double px_y(double v, const PlotFrame& f) { return f.height - f.margin - v * (f.height - 2 * f.margin); }

void open_svg(std::ostringstream& os, const PlotFrame& f) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.width) << "\" height=\""
     << num(f.height) << "\" viewBox=\"0 0 " << num(f.width) << ' ' << num(f.height) << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << num(f.width) << "\" height=\"" << num(f.height)
     << "\" fill=\"white\"/>\n"
     << "<rect x=\"" << num(f.margin) << "\" y=\"" << num(f.margin) << "\" width=\""
     << num(f.width - 2 * f.margin) << "\" height=\"" << num(f.height - 2 * f.margin)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
}

void text(std::ostringstream& os, double x, double y, const std::string& s, const char* anchor = "middle",
          double rotate = 0.0) {
  os << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"11\" "
     << "text-anchor=\"" << anchor << "\"";
  if (rotate != 0.0) os << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
  os << '>' << escape(s) << "</text>\n";
}

void y_ticks(std::ostringstream& os, const PlotFrame& f) {
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    text(os, f.margin - 6, px_y(v, f) + 4, num(v), "end");
  }
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, std::string& header) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("plot: cannot read " + path.string());
  std::getline(is, header);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("plot: cannot write " + path.string());
  os << content;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

std::string roc_point_coord(double fpr, double tpr, bool log_fpr, double min_fpr, const PlotFrame& frame) {
  return num(px_x(roc_x_unit(fpr, log_fpr, min_fpr), frame)) + "," + num(px_y(tpr, frame));
}

std::string roc_svg(const RocCurve& curve, bool log_fpr, double min_fpr, const PlotFrame& frame) {
  if (log_fpr && !(min_fpr > 0.0 && min_fpr < 1.0)) {
    throw std::invalid_argument("roc_svg: min_fpr must lie in (0, 1)");
  }
  std::ostringstream os;
  open_svg(os, frame);
  const double x0 = px_x(0, frame), x1 = px_x(1, frame), y0 = px_y(0, frame), y1 = px_y(1, frame);
  if (log_fpr) {
    const int decades = static_cast<int>(std::lround(-std::log10(min_fpr)));
    for (int d = 0; d <= decades; ++d) {
      const double f = std::pow(10.0, -d);
      text(os, px_x(roc_x_unit(f, true, min_fpr), frame), y0 + 16, "1e-" + std::to_string(d));
    }
  } else {
    for (int i = 0; i <= 4; ++i) text(os, px_x(i / 4.0, frame), y0 + 16, num(i / 4.0));
    os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y1)
       << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  }
  y_ticks(os, frame);
  text(os, (x0 + x1) / 2, frame.height - 10, log_fpr ? "false positive rate (log)" : "false positive rate");
  text(os, 14, (y0 + y1) / 2, "true positive rate", "middle", -90);
  os << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (i) os << ' ';
    os << roc_point_coord(curve.points[i].fpr, curve.points[i].tpr, log_fpr, min_fpr, frame);
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

std::string line_chart_svg(const std::string& x_title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series, const PlotFrame& frame) {
  if (x_labels.empty()) throw std::invalid_argument("line_chart_svg: no x values");
  std::ostringstream os;
  open_svg(os, frame);
  const std::size_t n = x_labels.size();
  auto xu = [n](std::size_t i) { return n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1); };
  const double y0 = px_y(0, frame);
  for (std::size_t i = 0; i < n; ++i) text(os, px_x(xu(i), frame), y0 + 16, x_labels[i]);
  y_ticks(os, frame);
  text(os, frame.width / 2, frame.height - 10, x_title);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    if (ser.values.size() != n) throw std::invalid_argument("line_chart_svg: series '" + ser.name + "' length mismatch");
    const char* color = kPalette[s % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      if (i) os << ' ';
      os << num(px_x(xu(i), frame)) << ',' << num(px_y(std::clamp(ser.values[i], 0.0, 1.0), frame));
    }
    os << "\"/>\n";
    text(os, frame.width - frame.margin + 4, frame.margin + 14.0 * static_cast<double>(s + 1), ser.name, "start");
  }
  os << "</svg>\n";
  return os.str();
}

void emit_roc_plot(const std::filesystem::path& roc_csv, const std::filesystem::path& svg, bool log_fpr) {
  if (!std::filesystem::exists(roc_csv)) throw std::runtime_error("plot: missing ROC CSV " + roc_csv.string());
  write_text(svg, roc_svg(read_roc_csv(roc_csv), log_fpr));
}

void emit_sweep_plot(const std::filesystem::path& sweep_csv, const std::filesystem::path& svg,
                     const std::string& x_title) {
  if (!std::filesystem::exists(sweep_csv)) throw std::runtime_error("plot: missing sweep CSV " + sweep_csv.string());
  std::string header;
  const auto rows = read_csv_rows(sweep_csv, header);
  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  if (names.size() < 2) throw std::runtime_error("plot: sweep CSV has no metric columns");
  std::vector<std::string> labels;
  std::vector<Series> series;
  for (std::size_t c = 1; c < names.size(); ++c) series.push_back({names[c], {}});
  for (const auto& row : rows) {
    if (row.size() != names.size()) throw std::runtime_error("plot: ragged row in " + sweep_csv.string());
    labels.push_back(row[0]);
    for (std::size_t c = 1; c < row.size(); ++c) series[c - 1].values.push_back(std::stod(row[c]));
  }
  write_text(svg, line_chart_svg(x_title, labels, series));
}

}  // namespace gsamia
