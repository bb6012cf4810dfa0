#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsamia/attack.hpp"
#include "gsamia/dataset.hpp"
#include "gsamia/defenses.hpp"
#include "gsamia/diffusion.hpp"
#include "gsamia/features.hpp"

namespace gsamia {

/// Raised for unreadable, malformed or invalid configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSpec {
  DataSource source = DataSource::synthetic;
  std::filesystem::path path;  // cifar10 batch file or saved dataset
  std::size_t count = 2000;    // images taken from the source
  std::size_t side = 8;
  std::size_t classes = 10;
};

struct SplitSpec {
  std::size_t members = 500;
  std::size_t nonmembers = 500;
  std::size_t shadow_pool = 1000;
  std::size_t shadow_members = 500;  // per shadow; as many nonmembers
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::linear;
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double cosine_s = 0.008;

  NoiseSchedule build() const;
};

struct ModelSpec {
  std::vector<std::size_t> widths{256, 256};
  std::size_t embed_dim = 32;
};

struct TrainSpec {
  int epochs = 800;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::constant;
};

/// Shadow training settings; unset fields inherit from the target.
struct ShadowSpec {
  std::size_t count = 2;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<LrSchedule> lr_schedule;

  TrainSpec resolve(const TrainSpec& target) const;
};

struct FeatureSpec {
  SamplerMethod sampler = SamplerMethod::equidistant;
  int k = 10;
  double layer_fraction = 1.0;
  int repeats = 1;
  bool squared = true;
  int effective_stride = 20;
};

enum class AttackFeature { gsa1, gsa2, lsa, threshold };

AttackFeature parse_attack_feature(const std::string& name);
std::string to_string(AttackFeature kind);

struct AttackSpec {
  AttackFeature feature = AttackFeature::gsa2;
  AttackKind model = AttackKind::logistic;
  double l2 = 1e-3;
  std::size_t hidden = 64;
  double learning_rate = 1e-2;
  int max_epochs = 2000;
  int patience = 100;
  double loss_round = 1e-7;
};

struct DefenseConfig {
  DefenseSpec spec{DefenseKind::none, {}, AugmentationPolicy{.flip_prob = 0.5, .cutout_prob = 1.0}};
  bool apply_to_shadows = true;
};

struct RunSpec {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t workers = 0;      // 0: GSA_MIA_WORKERS or hardware concurrency
  std::filesystem::path cache;  // empty: <out>/cache
};

struct ExperimentConfig {
  DataSpec data;
  SplitSpec split;
  ScheduleSpec schedule;
  ModelSpec model;
  TrainSpec target;
  ShadowSpec shadow;
  FeatureSpec features;
  AttackSpec attack;
  DefenseConfig defense;
  RunSpec run;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  std::filesystem::path cache_dir() const;
};

/// Section -> key -> raw value. `#` starts a comment; blank lines are ignored.
using IniDocument = std::map<std::string, std::map<std::string, std::string>>;

IniDocument parse_ini(const std::string& text);

/// Unknown sections or keys and unparsable values throw ConfigError.
ExperimentConfig config_from_ini(const IniDocument& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form listing every set key; loading it reproduces the config.
std::string to_ini(const ExperimentConfig& config);

/// Applies `section.key=value` overrides in order.
void apply_override(ExperimentConfig& config, const std::string& dotted_key, const std::string& value);

/// 16 hex digits of FNV-1a 64 over the given text.
std::string fnv1a_hex(const std::string& text);

}  // namespace gsamia
