#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gsamia/features.hpp"
#include "gsamia/rng.hpp"
#include "gsamia/tensor.hpp"

namespace gsamia {

struct ShadowSplit {
  std::vector<std::size_t> members;     // indices into the auxiliary pool
  std::vector<std::size_t> nonmembers;  // same size, disjoint from members
  std::uint64_t seed = 0;
};

struct ShadowPlan {
  std::vector<ShadowSplit> shadows;
};

/// Each shadow gets per_shadow_train_size members and as many nonmembers,
/// drawn without replacement from [0, pool_size).
ShadowPlan build_shadow_plan(std::size_t pool_size, std::size_t shadow_count,
                             std::size_t per_shadow_train_size, Rng& rng);

/// log1p then z-score, fitted per coordinate.
struct FeatureNormalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static FeatureNormalizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(std::span<const double> raw) const;
};

/// Labelled shadow rows plus the normalization fitted on exactly those rows.
struct AttackDataset {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  FeatureNormalizer normalizer;

  static AttackDataset from_rows(const FeatureRows& shadow_rows);
  std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }
};

enum class AttackKind { logistic, mlp };

AttackKind parse_attack_kind(const std::string& name);
std::string to_string(AttackKind kind);

struct AttackTrainConfig {
  std::uint64_t seed = 0;
  // logistic regression
  double l2 = 1e-3;
  double tolerance = 1e-7;  // stop when ||grad||_2 falls below
  int max_iters = 50000;
  // mlp
  std::size_t hidden = 64;
  double learning_rate = 1e-2;
  int max_epochs = 2000;
  int patience = 100;
  double validation_fraction = 0.2;
};

class AttackModel {
 public:
  AttackKind kind = AttackKind::logistic;
  FeatureNormalizer normalizer;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  // logistic
  std::vector<double> weights;
  double bias = 0.0;
  // mlp: hidden x dim weights, hidden biases, hidden output weights, output bias
  std::size_t hidden = 0;
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;

  /// Member-likeness in [0, 1] for a raw (unnormalized) feature vector.
  double predict(std::span<const double> raw) const;
  std::vector<double> predict(const FeatureRows& rows) const;

  void save(const std::filesystem::path& path) const;
  static AttackModel load(const std::filesystem::path& path);
};

AttackModel train_attack_model(const AttackDataset& data, AttackKind kind,
                               const AttackTrainConfig& config);

/// Mean logistic loss over rows plus (l2/2)||w||^2; the bias is unpenalised.
double logistic_objective(const std::vector<std::vector<double>>& x, std::span<const int> y,
                          std::span<const double> w, double b, double l2);
/// Gradient of logistic_objective; the last entry is d/d(bias).
std::vector<double> logistic_gradient(const std::vector<std::vector<double>>& x,
                                      std::span<const int> y, std::span<const double> w, double b,
                                      double l2);

/// Calls a sample a member when its statistic (mean loss over K) is below tau.
struct ThresholdAttack {
  double tau = 0.0;
  double balanced_accuracy = 0.0;

  bool is_member(double statistic) const { return statistic < tau; }
  /// Score for ROC/ASR: tau - statistic, so score >= 0 means member (ties aside).
  double score(double statistic) const { return tau - statistic; }
};

/// Scans tau over min(stat), the midpoints between consecutive distinct
/// values and max(stat) + 1, keeping the best balanced accuracy; ties go to
/// the smaller tau.
ThresholdAttack fit_threshold(std::span<const double> statistics, std::span<const int> labels);

struct LossPair {
  std::size_t member = 0;
  std::size_t nonmember = 0;
  long long key = 0;  // rounded loss / round_to
};

/// Greedy pairing of members and nonmembers whose losses agree after rounding
/// to the nearest multiple of round_to; members are visited in index order and
/// take the lowest-index unused nonmember with the same key.
std::vector<LossPair> match_loss_pairs(std::span<const double> member_losses,
                                       std::span<const double> nonmember_losses, double round_to);

struct LossMatchResult {
  std::vector<LossPair> pairs;
  std::size_t correct = 0;  // over the 2 * pairs.size() paired samples
  double accuracy = 0.0;    // 0 when there are no pairs
};

/// Accuracy of an attack (score >= 0.5 means member) restricted to
/// loss-matched samples.
LossMatchResult loss_matched_pairs(std::span<const double> member_losses,
                                   std::span<const double> nonmember_losses,
                                   std::span<const double> member_scores,
                                   std::span<const double> nonmember_scores,
                                   double round_to = 1e-7);

}  // namespace gsamia
