#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gsamia/config.hpp"
#include "gsamia/dataset.hpp"
#include "gsamia/experiment.hpp"
#include "gsamia/plots.hpp"

using namespace gsamia;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string attack;
  std::string sampler;
  std::optional<int> k;
  std::optional<double> layer_fraction;
  std::string defense;
  std::vector<std::string> sets;
};

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) c.run.seed = *f.seed;
  if (!f.out.empty()) c.run.out = f.out;
  if (!f.attack.empty()) apply_override(c, "attack.kind", f.attack);
  if (!f.sampler.empty()) apply_override(c, "features.sampler", f.sampler);
  if (f.k) c.features.k = *f.k;
  if (f.layer_fraction) c.features.layer_fraction = *f.layer_fraction;
  if (!f.defense.empty()) apply_override(c, "defense.kind", f.defense);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    apply_override(c, s.substr(0, eq), s.substr(eq + 1));
  }
  c.validate();
  return c;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_summary(const RunSummary& s) {
  std::cout << "asr " << s.report.asr << "\nauc " << s.report.auc << "\ntpr@1%fpr " << s.report.tpr_at_1pct_fpr
            << "\ntpr@0.1%fpr " << s.report.tpr_at_01pct_fpr << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"White-box membership inference against diffusion models (GSA1/GSA2)"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags flags;
  app.add_option("--config", flags.config, "Experiment config file");
  app.add_option("--seed", flags.seed, "Root seed");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--attack", flags.attack, "gsa1|gsa2|lsa|threshold");
  app.add_option("--sampler", flags.sampler, "equidistant|poisson|effective");
  app.add_option("--k", flags.k, "Number of sampled timesteps |K|");
  app.add_option("--layer-fraction", flags.layer_fraction, "Fraction of layers kept, in (0, 1]");
  app.add_option("--defense", flags.defense, "none|dpsgd|flip|cutout|randaug-lite");
  app.add_option("--set", flags.sets, "Override any config key: section.key=value");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  std::size_t gen_count = 2000, gen_side = 8, gen_classes = 10;
  std::string gen_output;
  gen->add_option("--count", gen_count, "Number of images")->capture_default_str();
  gen->add_option("--side", gen_side, "Image side: 8, 16 or 32")->capture_default_str();
  gen->add_option("--classes", gen_classes, "Number of classes")->capture_default_str();
  gen->add_option("--output", gen_output, "Dataset file to write")->required();

  auto* cifar = app.add_subcommand("import-cifar10", "Convert a CIFAR-10 binary batch to a dataset file");
  std::string cifar_input, cifar_output;
  cifar->add_option("--input", cifar_input, "CIFAR-10 binary batch")->required();
  cifar->add_option("--output", cifar_output, "Dataset file to write")->required();

  auto* train_target = app.add_subcommand("train-target", "Train (or reuse) the target model");
  auto* train_shadows = app.add_subcommand("train-shadows", "Train (or reuse) the shadow models");
  auto* extract = app.add_subcommand("extract-features", "Extract shadow and target features");
  auto* train_attack = app.add_subcommand("train-attack", "Fit the attack on shadow features");
  auto* evaluate = app.add_subcommand("evaluate", "Score the target samples and write the report");
  auto* run = app.add_subcommand("run", "Full pipeline");

  auto* sweep_cmd = app.add_subcommand("sweep", "One run per value of a single axis");
  std::string sweep_axis, sweep_values;
  sweep_cmd->add_option("--axis", sweep_axis,
                        "epochs|sample_times|diffusion_steps|resolution|layer_fraction|sampler_method")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated axis values")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG plots from CSV artifacts");
  std::string plot_roc, plot_sweep, plot_output, plot_xtitle = "value";
  bool plot_log = false;
  plot->add_option("--roc", plot_roc, "ROC CSV (fpr,tpr,threshold)");
  plot->add_option("--sweep", plot_sweep, "Sweep CSV (axis_value,asr,auc,tpr1,tpr01)");
  plot->add_option("--x-title", plot_xtitle, "X axis title for sweep charts");
  plot->add_flag("--log-fpr", plot_log, "Logarithmic FPR axis");
  plot->add_option("--output", plot_output, "SVG file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig c = resolve_config(flags);
      c.data.count = gen_count;
      c.data.side = gen_side;
      c.data.classes = gen_classes;
      if (gen_side != 8 && gen_side != 16 && gen_side != 32) throw ConfigError("--side must be 8, 16 or 32");
      save_dataset(build_dataset(c), gen_output);
      std::cout << "wrote " << gen_count << " images to " << gen_output << '\n';
      return kOk;
    }
    if (cifar->parsed()) {
      try {
        const ImageDataset data = import_cifar10(cifar_input);
        save_dataset(data, cifar_output);
        std::cout << "wrote " << data.size() << " images to " << cifar_output << '\n';
      } catch (const std::exception& e) {
        throw StageError("import-cifar10", e.what());
      }
      return kOk;
    }
    if (plot->parsed()) {
      if (plot_roc.empty() == plot_sweep.empty()) throw ConfigError("plot: give exactly one of --roc or --sweep");
      try {
        if (!plot_roc.empty()) {
          emit_roc_plot(plot_roc, plot_output, plot_log);
        } else {
          emit_sweep_plot(plot_sweep, plot_output, plot_xtitle);
        }
      } catch (const std::exception& e) {
        throw StageError("plot", e.what());
      }
      std::cout << "wrote " << plot_output << '\n';
      return kOk;
    }

    const ExperimentConfig config = resolve_config(flags);
    if (sweep_cmd->parsed()) {
      const auto rows = sweep(config, parse_sweep_axis(sweep_axis), split_csv(sweep_values));
      std::cout << "axis_value,asr,auc,tpr1,tpr01\n";
      for (const auto& r : rows) {
        std::cout << r.axis_value << ',' << r.report.asr << ',' << r.report.auc << ',' << r.report.tpr_at_1pct_fpr
                  << ',' << r.report.tpr_at_01pct_fpr << '\n';
      }
      return kOk;
    }

    Experiment exp(config);
    if (train_target->parsed()) {
      exp.target();
    } else if (train_shadows->parsed()) {
      exp.shadows();
    } else if (extract->parsed()) {
      exp.shadow_features();
      exp.target_features();
    } else if (train_attack->parsed()) {
      exp.train_attack();
    } else if (evaluate->parsed()) {
      print_summary(exp.evaluate());
    } else if (run->parsed()) {
      print_summary(exp.run());
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StageError& e) {
    std::cerr << "stage failure in " << e.what() << '\n';
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  }
}
