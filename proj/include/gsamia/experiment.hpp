#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsamia/attack.hpp"
#include "gsamia/config.hpp"
#include "gsamia/dataset.hpp"
#include "gsamia/denoiser.hpp"
#include "gsamia/diffusion.hpp"
#include "gsamia/features.hpp"
#include "gsamia/metrics.hpp"

namespace gsamia {

/// A pipeline stage failed; what() starts with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& detail)
      : std::runtime_error(stage + ": " + detail), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Row indices into the dataset.
struct Splits {
  std::vector<std::size_t> target_members;
  std::vector<std::size_t> target_nonmembers;
  std::vector<std::size_t> shadow_pool;
};

/// Shuffles [0, count) and slices it into the three pools.
Splits make_splits(std::size_t count, const SplitSpec& spec, Rng& rng);

/// Throws std::logic_error if any image id appears in two pools.
void check_pool_disjointness(const ImageDataset& data, const Splits& splits);

/// Seed of every randomized stage, derived from the root seed.
enum class SeedStream : std::uint64_t {
  dataset = 1,
  split = 2,
  target = 3,
  shadow_plan = 4,
  shadow = 5,
  feature_noise = 6,
  sampler = 7,
  attack = 8,
};
std::uint64_t stage_seed(std::uint64_t root, SeedStream stream, std::uint64_t index = 0);

/// Hash of the config with the run location fields (out, cache, workers)
/// blanked, so relocating a run keeps its digest.
std::string experiment_digest(const ExperimentConfig& config);

ImageDataset build_dataset(const ExperimentConfig& config);

struct LossMatchSummary {
  double round_to = 1e-7;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct RunSummary {
  EvalReport report;
  std::vector<int> timesteps;
  std::optional<int> effective_best_step;
  std::size_t feature_dim = 0;
  double target_final_loss = 0.0;
  std::vector<double> shadow_final_losses;
  std::optional<LossMatchSummary> loss_matched;
};

/// One configured experiment. Each accessor runs its stage on first use and
/// any stage it depends on. Models and feature tables are cached under
/// config.cache_dir() keyed by a digest of everything that determines them,
/// so reruns and runs sharing a cache skip finished work.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const ImageDataset& dataset();
  const Splits& splits();
  const NoiseSchedule& schedule() const { return schedule_; }

  const DenoiserNet& target();
  const std::vector<DenoiserNet>& shadows();
  const ShadowPlan& shadow_plan();

  /// Resolves the sampler; effective sampling scores candidate steps on the shadows.
  const TimestepSet& timesteps();
  /// Shadow rows of every shadow (members label 1) and target rows, after layer selection.
  const FeatureRows& shadow_features();
  const FeatureRows& target_features();

  /// Fits the attack on the shadow features and writes it under out/.
  void train_attack();
  /// Scores the target rows and writes scores, ROC, plot and report.
  RunSummary evaluate();
  /// Every stage in order.
  RunSummary run();

  std::filesystem::path out_dir() const { return config_.run.out; }

 private:
  DenoiserNet train_or_load(const std::string& role, const std::vector<std::size_t>& rows,
                            std::uint64_t init_seed, std::uint64_t train_seed, const TrainSpec& spec,
                            const DefenseSpec& defense, double* final_loss);
  FeatureRows cached_features(const DenoiserNet& net, const std::string& model_digest,
                              const std::vector<std::size_t>& rows, const std::vector<int>& labels,
                              const TimestepSet& K, FeatureKind kind);
  double effective_score(int t);
  FeatureKind feature_kind() const;
  std::size_t workers() const;
  std::vector<double> target_mean_losses();

  ExperimentConfig config_;
  NoiseSchedule schedule_;
  std::optional<ImageDataset> dataset_;
  std::optional<Splits> splits_;
  std::optional<ShadowPlan> plan_;
  std::optional<DenoiserNet> target_;
  double target_final_loss_ = 0.0;
  std::optional<std::vector<DenoiserNet>> shadows_;
  std::vector<double> shadow_final_losses_;
  std::optional<TimestepSet> timesteps_;
  std::optional<int> best_step_;
  std::optional<FeatureRows> shadow_rows_;
  std::optional<FeatureRows> target_rows_;
  std::optional<AttackModel> attack_model_;
  std::optional<ThresholdAttack> threshold_;
};

/// Runs the experiment end to end (wrapping stage failures in StageError).
RunSummary run_experiment(const ExperimentConfig& config);

/// JSON text of the report, stable across runs.
std::string report_json(const ExperimentConfig& config, const RunSummary& summary);

enum class SweepAxis { epochs, sample_times, diffusion_steps, resolution, layer_fraction, sampler_method };

SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

struct SweepRow {
  std::string axis_value;
  EvalReport report;
};

/// One run per value with only that axis changed. Runs go to
/// <out>/sweep_<axis>/<value> and share the base cache; the table is written
/// to <out>/sweep_<axis>.csv with a line chart next to it.
std::vector<SweepRow> sweep(const ExperimentConfig& config, SweepAxis axis,
                            const std::vector<std::string>& values);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace gsamia
