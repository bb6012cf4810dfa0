#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsamia/metrics.hpp"

namespace gsamia {

struct PlotFrame {
  double width = 480.0;
  double height = 360.0;
  double margin = 48.0;
};

/// ROC curve as one polyline in the unit square. With log_fpr the x axis is
/// log10(fpr) over [min_fpr, 1] and smaller fprs are pinned to min_fpr.
std::string roc_svg(const RocCurve& curve, bool log_fpr = false, double min_fpr = 1e-3,
                    const PlotFrame& frame = {});

/// Pixel position of (fpr, tpr) in roc_svg output, formatted as "x,y".
std::string roc_point_coord(double fpr, double tpr, bool log_fpr = false, double min_fpr = 1e-3,
                            const PlotFrame& frame = {});

struct Series {
  std::string name;
  std::vector<double> values;  // one per x label
};

/// Categorical x axis, y in [0, 1]; one polyline per series.
std::string line_chart_svg(const std::string& x_title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series, const PlotFrame& frame = {});

/// Reads a ROC CSV and writes the SVG. Missing input throws.
void emit_roc_plot(const std::filesystem::path& roc_csv, const std::filesystem::path& svg,
                   bool log_fpr = false);
/// Reads a sweep table (axis_value,asr,auc,tpr1,tpr01) and charts every metric.
void emit_sweep_plot(const std::filesystem::path& sweep_csv, const std::filesystem::path& svg,
                     const std::string& x_title);

}  // namespace gsamia
