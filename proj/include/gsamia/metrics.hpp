#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gsamia {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // score >= threshold is called a member
};

/// Starts at (0,0) and ends at (1,1); fpr and tpr never decrease.
struct RocCurve {
  std::vector<RocPoint> points;
};

/// Labels: 1 member (positive), 0 nonmember. Thresholds sweep the distinct
/// scores in descending order, so tied samples move together.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

/// Fraction of correct calls with score >= threshold meaning member. The
/// evaluation set must hold as many members as nonmembers.
double asr(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Best TPR among curve points with fpr <= target_fpr (no interpolation).
double tpr_at_fpr(const RocCurve& curve, double target_fpr);

struct EvalReport {
  double asr = 0.0;
  double auc = 0.0;
  double tpr_at_1pct_fpr = 0.0;
  double tpr_at_01pct_fpr = 0.0;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  std::string config_digest;
};

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold = 0.5, const std::string& config_digest = "");

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
RocCurve read_roc_csv(const std::filesystem::path& path);

}  // namespace gsamia
