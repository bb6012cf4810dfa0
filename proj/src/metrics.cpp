#include "gsamia/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gsamia {

namespace {

std::pair<std::size_t, std::size_t> count_labels(std::span<const double> scores,
                                                 std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length");
  }
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l == 1) {
      ++pos;
    } else if (l == 0) {
      ++neg;
    } else {
      throw std::invalid_argument("labels must be 0 or 1");
    }
  }
  return {pos, neg};
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = count_labels(scores, labels);
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_curve: both classes must be present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

double asr(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const auto [pos, neg] = count_labels(scores, labels);
  if (pos != neg) {
    throw std::invalid_argument("asr: evaluation set is unbalanced (" + std::to_string(pos) +
                                " members vs " + std::to_string(neg) + " nonmembers)");
  }
  if (scores.empty()) throw std::invalid_argument("asr: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool member = scores[i] >= threshold;
    if (member == (labels[i] == 1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double tpr_at_fpr(const RocCurve& curve, double target_fpr) {
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw std::invalid_argument("tpr_at_fpr: target must lie in (0, 1)");
  }
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= target_fpr) best = std::max(best, p.tpr);
  }
  return best;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold, const std::string& config_digest) {
  EvalReport r;
  const auto curve = roc_curve(scores, labels);
  r.asr = asr(scores, labels, threshold);
  r.auc = auc(curve);
  r.tpr_at_1pct_fpr = tpr_at_fpr(curve, 0.01);
  r.tpr_at_01pct_fpr = tpr_at_fpr(curve, 0.001);
  const auto [pos, neg] = count_labels(scores, labels);
  r.n_members = pos;
  r.n_nonmembers = neg;
  r.config_digest = config_digest;
  return r;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "fpr,tpr,threshold\n" << std::setprecision(17);
  for (const auto& p : curve.points) os << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
}

RocCurve read_roc_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "fpr,tpr,threshold") {
    throw std::runtime_error(path.string() + ": expected header fpr,tpr,threshold");
  }
  RocCurve curve;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    curve.points.push_back({std::stod(a), std::stod(b), std::stod(c)});
  }
  if (curve.points.empty()) throw std::runtime_error(path.string() + ": no ROC points");
  return curve;
}

}  // namespace gsamia
