#include "gsamia/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gsamia/parallel.hpp"
#include "gsamia/plots.hpp"

namespace gsamia {

namespace {

std::mutex log_mutex;

void log_stage(const std::string& stage, const std::string& msg) {
  const std::string line = "[" + stage + "] " + msg + "\n";
  std::lock_guard lock(log_mutex);
  std::clog << line << std::flush;
}

template <class F>
auto in_stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string dataset_key(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "data:" << to_string(c.data.source) << ':' << c.data.path.string() << ':' << c.data.count << ':'
     << c.data.side << ':' << c.data.classes << ":seed=" << c.run.seed << '\n';
  return os.str();
}

double last_loss(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  std::string line, last;
  while (std::getline(is, line)) {
    if (!line.empty()) last = line;
  }
  const auto comma = last.find(',');
  if (comma == std::string::npos) throw std::runtime_error("malformed loss trace " + csv.string());
  return std::stod(last.substr(comma + 1));
}

std::vector<double> row_means(const FeatureRows& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back(std::accumulate(r.values.begin(), r.values.end(), 0.0) / static_cast<double>(r.values.size()));
  }
  return out;
}

std::vector<int> labels_of(const FeatureRows& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

}  // namespace

Splits make_splits(std::size_t count, const SplitSpec& spec, Rng& rng) {
  const std::size_t need = spec.members + spec.nonmembers + spec.shadow_pool;
  if (need > count) {
    throw std::invalid_argument("splits need " + std::to_string(need) + " images, dataset has " +
                                std::to_string(count));
  }
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  Splits s;
  auto it = perm.begin();
  s.target_members.assign(it, it + static_cast<std::ptrdiff_t>(spec.members));
  it += static_cast<std::ptrdiff_t>(spec.members);
  s.target_nonmembers.assign(it, it + static_cast<std::ptrdiff_t>(spec.nonmembers));
  it += static_cast<std::ptrdiff_t>(spec.nonmembers);
  s.shadow_pool.assign(it, it + static_cast<std::ptrdiff_t>(spec.shadow_pool));
  return s;
}

void check_pool_disjointness(const ImageDataset& data, const Splits& splits) {
  std::set<std::uint64_t> seen;
  for (const auto* pool : {&splits.target_members, &splits.target_nonmembers, &splits.shadow_pool}) {
    for (std::size_t row : *pool) {
      if (row >= data.size()) throw std::logic_error("split row " + std::to_string(row) + " out of range");
      if (!seen.insert(data.ids[row]).second) {
        throw std::logic_error("image id " + std::to_string(data.ids[row]) + " appears in more than one pool");
      }
    }
  }
}

std::uint64_t stage_seed(std::uint64_t root, SeedStream stream, std::uint64_t index) {
  return derive_seed(root, {static_cast<std::uint64_t>(stream), index});
}

std::string experiment_digest(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.run.out.clear();
  c.run.cache.clear();
  c.run.workers = 0;
  return fnv1a_hex(to_ini(c));
}

ImageDataset build_dataset(const ExperimentConfig& config) {
  const auto& d = config.data;
  ImageDataset full;
  switch (d.source) {
    case DataSource::synthetic:
      return generate_synthetic_dataset(d.count, d.side, d.classes, stage_seed(config.run.seed, SeedStream::dataset));
    case DataSource::cifar10: full = import_cifar10(d.path); break;
    case DataSource::raw: full = load_dataset(d.path); break;
  }
  if (full.size() < d.count) {
    throw std::runtime_error("dataset " + d.path.string() + " holds " + std::to_string(full.size()) +
                             " images, config asks for " + std::to_string(d.count));
  }
  std::vector<std::size_t> rows(d.count);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return full.subset(rows);
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  schedule_ = config_.schedule.build();
}

std::size_t Experiment::workers() const {
  return config_.run.workers > 0 ? config_.run.workers : default_workers();
}

FeatureKind Experiment::feature_kind() const {
  switch (config_.attack.feature) {
    case AttackFeature::gsa1: return FeatureKind::gsa1;
    case AttackFeature::gsa2: return FeatureKind::gsa2;
    default: return FeatureKind::lsa;
  }
}

const ImageDataset& Experiment::dataset() {
  if (!dataset_) dataset_ = in_stage("data", [&] { return build_dataset(config_); });
  return *dataset_;
}

const Splits& Experiment::splits() {
  if (!splits_) {
    const auto& data = dataset();
    splits_ = in_stage("data", [&] {
      Rng rng(stage_seed(config_.run.seed, SeedStream::split));
      Splits s = make_splits(data.size(), config_.split, rng);
      check_pool_disjointness(data, s);
      nlohmann::ordered_json j;
      auto ids = [&](const std::vector<std::size_t>& rows) {
        std::vector<std::uint64_t> out;
        for (auto r : rows) out.push_back(data.ids[r]);
        return out;
      };
      j["target_members"] = ids(s.target_members);
      j["target_nonmembers"] = ids(s.target_nonmembers);
      j["shadow_pool"] = ids(s.shadow_pool);
      write_text(out_dir() / "splits.json", j.dump() + "\n");
      return s;
    });
  }
  return *splits_;
}

const ShadowPlan& Experiment::shadow_plan() {
  if (!plan_) {
    const auto& pool = splits().shadow_pool;
    plan_ = in_stage("train-shadows", [&] {
      Rng rng(stage_seed(config_.run.seed, SeedStream::shadow_plan));
      ShadowPlan plan = build_shadow_plan(pool.size(), config_.shadow.count, config_.split.shadow_members, rng);
      for (auto& sh : plan.shadows) {
        for (auto& i : sh.members) i = pool[i];
        for (auto& i : sh.nonmembers) i = pool[i];
      }
      return plan;
    });
  }
  return *plan_;
}

DenoiserNet Experiment::train_or_load(const std::string& role, const std::vector<std::size_t>& rows,
                                      std::uint64_t init_seed, std::uint64_t train_seed, const TrainSpec& spec,
                                      const DefenseSpec& defense, double* final_loss) {
  const auto& data = dataset();
  std::ostringstream key;
  key << dataset_key(config_) << "rows:" << join(rows) << "\nmodel:" << join(config_.model.widths) << ':'
      << config_.model.embed_dim << "\nschedule:" << to_string(config_.schedule.kind) << ':' << config_.schedule.steps
      << ':' << config_.schedule.beta_start << ':' << config_.schedule.beta_end << ':' << config_.schedule.cosine_s
      << "\ntrain:" << spec.epochs << ':' << spec.batch_size << ':' << spec.learning_rate << ':'
      << static_cast<int>(spec.lr_schedule) << "\ndefense:" << to_string(defense.kind);
  key << std::setprecision(17);
  if (defense.kind == DefenseKind::dpsgd) key << ':' << defense.dp.clip_bound << ':' << defense.dp.noise_multiplier;
  if (defense.augments()) {
    const auto& a = defense.augmentation;
    key << ':' << a.flip_prob << ':' << a.cutout_prob << ':' << a.cutout_size << ':' << a.brightness << ':' << a.translate;
  }
  key << "\nseeds:" << init_seed << ':' << train_seed << '\n';
  const std::string digest = fnv1a_hex(key.str());
  const auto dir = config_.cache_dir() / "models" / digest;
  const auto model_path = dir / "model.bin";
  const auto done = dir / "complete";

  if (std::filesystem::exists(done)) {
    log_stage(role, "reusing checkpoint " + model_path.string());
    if (final_loss) *final_loss = last_loss(dir / "loss.csv");
    return DenoiserNet::load(model_path, schedule_.T);
  }
  DenoiserConfig dc;
  dc.input_shape = data.image_shape();
  dc.hidden_widths = config_.model.widths;
  dc.embed_dim = config_.model.embed_dim;
  dc.max_t = schedule_.T;
  Rng init_rng(init_seed);
  DenoiserNet net = DenoiserNet::init(dc, init_rng);

  TrainConfig tc;
  tc.epochs = spec.epochs;
  tc.batch_size = spec.batch_size;
  tc.learning_rate = spec.learning_rate;
  tc.lr_schedule = spec.lr_schedule;
  tc.seed = train_seed;
  log_stage(role, "training " + std::to_string(spec.epochs) + " epochs on " + std::to_string(rows.size()) +
                      " images (defense " + to_string(defense.kind) + ")");
  const ImageDataset subset = data.subset(rows);
  const TrainResult result = train(net, subset.images, schedule_, tc, defense);
  std::filesystem::create_directories(dir);
  net.save(model_path);
  write_loss_trace_csv(dir / "loss.csv", result.loss_trace);
  write_text(done, digest + "\n");
  if (final_loss) *final_loss = last_loss(dir / "loss.csv");
  return net;
}

const DenoiserNet& Experiment::target() {
  if (!target_) {
    const auto& s = splits();
    target_ = in_stage("train-target", [&] {
      const std::uint64_t root = config_.run.seed;
      return train_or_load("train-target", s.target_members, stage_seed(root, SeedStream::target, 0),
                           stage_seed(root, SeedStream::target, 1), config_.target, config_.defense.spec,
                           &target_final_loss_);
    });
  }
  return *target_;
}

const std::vector<DenoiserNet>& Experiment::shadows() {
  if (!shadows_) {
    const auto& plan = shadow_plan();
    shadows_ = in_stage("train-shadows", [&] {
      const std::size_t S = plan.shadows.size();
      const TrainSpec spec = config_.shadow.resolve(config_.target);
      const DefenseSpec defense = config_.defense.apply_to_shadows ? config_.defense.spec : DefenseSpec{};
      std::vector<std::optional<DenoiserNet>> nets(S);
      shadow_final_losses_.assign(S, 0.0);
      parallel_for(S, std::min(S, workers()), [&](std::size_t s, std::size_t) {
        nets[s] = train_or_load("train-shadows", plan.shadows[s].members,
                                stage_seed(config_.run.seed, SeedStream::shadow, 2 * s),
                                stage_seed(config_.run.seed, SeedStream::shadow, 2 * s + 1), spec, defense,
                                &shadow_final_losses_[s]);
      });
      std::vector<DenoiserNet> out;
      for (auto& n : nets) out.push_back(std::move(*n));
      return out;
    });
  }
  return *shadows_;
}

FeatureRows Experiment::cached_features(const DenoiserNet& net, const std::string& model_key,
                                        const std::vector<std::size_t>& rows, const std::vector<int>& labels,
                                        const TimestepSet& K, FeatureKind kind) {
  const auto& data = dataset();
  const std::uint64_t noise_root = stage_seed(config_.run.seed, SeedStream::feature_noise);
  std::ostringstream key;
  key << dataset_key(config_) << "model:" << model_key << "\nrows:" << join(rows) << "\nlabels:" << join(labels)
      << "\nK:" << join(K.steps) << "\nkind:" << to_string(kind) << "\nrepeats:" << config_.features.repeats
      << "\nsquared:" << config_.features.squared << "\nnoise:" << noise_root << '\n';
  const auto path = config_.cache_dir() / "features" / (fnv1a_hex(key.str()) + ".csv");
  if (std::filesystem::exists(path)) return read_feature_csv(path);

  FeatureOptions opt;
  opt.root_seed = noise_root;
  opt.repeats = config_.features.repeats;
  opt.squared = config_.features.squared;
  const ImageDataset subset = data.subset(rows);
  FeatureRows out = extract_features(net, schedule_, subset.images, subset.ids, labels, K, kind, opt, workers());
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  write_feature_csv(tmp, out);
  std::filesystem::rename(tmp, path);
  return read_feature_csv(path);
}

namespace {

struct LabeledRows {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
};

LabeledRows labeled(const std::vector<std::size_t>& members, const std::vector<std::size_t>& nonmembers) {
  LabeledRows out;
  out.rows = members;
  out.rows.insert(out.rows.end(), nonmembers.begin(), nonmembers.end());
  out.labels.assign(members.size(), 1);
  out.labels.resize(out.rows.size(), 0);
  return out;
}

// Everything that determines the trained models, and nothing else.
std::string models_key(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.features = {};
  k.attack = {};
  k.run.out.clear();
  k.run.cache.clear();
  k.run.workers = 0;
  return fnv1a_hex(to_ini(k));
}

std::string shadow_model_key(const ExperimentConfig& c, std::size_t s) {
  return "shadow" + std::to_string(s) + ":" + models_key(c);
}

std::string target_model_key(const ExperimentConfig& c) { return "target:" + models_key(c); }

AttackTrainConfig attack_train_config(const ExperimentConfig& c) {
  AttackTrainConfig a;
  a.seed = stage_seed(c.run.seed, SeedStream::attack);
  a.l2 = c.attack.l2;
  a.hidden = c.attack.hidden;
  a.learning_rate = c.attack.learning_rate;
  a.max_epochs = c.attack.max_epochs;
  a.patience = c.attack.patience;
  return a;
}

FeatureRows maybe_select(const FeatureRows& rows, FeatureKind kind, double fraction) {
  return kind == FeatureKind::lsa ? rows : select_layers(rows, fraction);
}

double rows_auc(const std::vector<double>& scores, const FeatureRows& rows) {
  const auto labels = labels_of(rows);
  return auc(roc_curve(scores, labels));
}

}  // namespace

double Experiment::effective_score(int t) {
  const auto& nets = shadows();
  const auto& plan = shadow_plan();
  const TimestepSet K{{t}, SamplerMethod::effective};
  const FeatureKind kind = feature_kind();
  std::vector<FeatureRows> per_shadow;
  for (std::size_t s = 0; s < nets.size(); ++s) {
    const auto lr = labeled(plan.shadows[s].members, plan.shadows[s].nonmembers);
    per_shadow.push_back(maybe_select(cached_features(nets[s], shadow_model_key(config_, s), lr.rows, lr.labels, K, kind),
                                      kind, config_.features.layer_fraction));
  }
  if (config_.attack.feature == AttackFeature::threshold) {
    FeatureRows all;
    for (const auto& r : per_shadow) all.insert(all.end(), r.begin(), r.end());
    std::vector<double> scores;
    for (double m : row_means(all)) scores.push_back(-m);
    return rows_auc(scores, all);
  }
  const AttackTrainConfig atk = attack_train_config(config_);
  auto score_split = [&](const FeatureRows& train_rows, const FeatureRows& test_rows) {
    const AttackModel model = train_attack_model(AttackDataset::from_rows(train_rows), config_.attack.model, atk);
    return rows_auc(model.predict(test_rows), test_rows);
  };
  if (per_shadow.size() == 1) {
    FeatureRows a, b;
    std::size_t seen_m = 0, seen_n = 0;
    const auto& rows = per_shadow.front();
    const std::size_t half_m = plan.shadows[0].members.size() / 2, half_n = plan.shadows[0].nonmembers.size() / 2;
    for (const auto& r : rows) {
      const bool first = r.label == 1 ? seen_m++ < half_m : seen_n++ < half_n;
      (first ? a : b).push_back(r);
    }
    return score_split(a, b);
  }
  double total = 0.0;
  for (std::size_t s = 0; s < per_shadow.size(); ++s) {
    FeatureRows train_rows;
    for (std::size_t o = 0; o < per_shadow.size(); ++o) {
      if (o != s) train_rows.insert(train_rows.end(), per_shadow[o].begin(), per_shadow[o].end());
    }
    total += score_split(train_rows, per_shadow[s]);
  }
  return total / static_cast<double>(per_shadow.size());
}

const TimestepSet& Experiment::timesteps() {
  if (!timesteps_) {
    timesteps_ = in_stage("extract-features", [&] {
      const int T = schedule_.T;
      const int k = config_.features.k;
      switch (config_.features.sampler) {
        case SamplerMethod::equidistant: return equidistant_sample(T, k);
        case SamplerMethod::poisson: {
          Rng rng(stage_seed(config_.run.seed, SeedStream::sampler));
          return poisson_sample(T, k, rng);
        }
        case SamplerMethod::effective: {
          int best = 1;
          TimestepSet K = effective_sample([this](int t) { return effective_score(t); }, T, k,
                                           config_.features.effective_stride, &best);
          best_step_ = best;
          log_stage("extract-features", "effective sampling peak at t=" + std::to_string(best));
          return K;
        }
      }
      throw std::logic_error("unknown sampler");
    });
  }
  return *timesteps_;
}

const FeatureRows& Experiment::shadow_features() {
  if (!shadow_rows_) {
    const auto& nets = shadows();
    const auto& plan = shadow_plan();
    const auto& K = timesteps();
    shadow_rows_ = in_stage("extract-features", [&] {
      log_stage("extract-features", to_string(feature_kind()) + " on " + std::to_string(nets.size()) +
                                        " shadows, |K| = " + std::to_string(K.size()));
      FeatureRows all;
      for (std::size_t s = 0; s < nets.size(); ++s) {
        const auto lr = labeled(plan.shadows[s].members, plan.shadows[s].nonmembers);
        const auto rows = cached_features(nets[s], shadow_model_key(config_, s), lr.rows, lr.labels, K, feature_kind());
        all.insert(all.end(), rows.begin(), rows.end());
      }
      all = maybe_select(all, feature_kind(), config_.features.layer_fraction);
      std::filesystem::create_directories(out_dir() / "features");
      write_feature_csv(out_dir() / "features" / "shadow.csv", all);
      return all;
    });
  }
  return *shadow_rows_;
}

const FeatureRows& Experiment::target_features() {
  if (!target_rows_) {
    const auto& net = target();
    const auto& s = splits();
    const auto& K = timesteps();
    target_rows_ = in_stage("extract-features", [&] {
      log_stage("extract-features", to_string(feature_kind()) + " on the target");
      const auto lr = labeled(s.target_members, s.target_nonmembers);
      auto rows = maybe_select(cached_features(net, target_model_key(config_), lr.rows, lr.labels, K, feature_kind()),
                               feature_kind(), config_.features.layer_fraction);
      std::filesystem::create_directories(out_dir() / "features");
      write_feature_csv(out_dir() / "features" / "target.csv", rows);
      return rows;
    });
  }
  return *target_rows_;
}

std::vector<double> Experiment::target_mean_losses() {
  const auto& net = target();
  const auto& s = splits();
  const auto lr = labeled(s.target_members, s.target_nonmembers);
  return row_means(cached_features(net, target_model_key(config_), lr.rows, lr.labels, timesteps(), FeatureKind::lsa));
}

void Experiment::train_attack() {
  const auto& rows = shadow_features();
  in_stage("train-attack", [&] {
    if (config_.attack.feature == AttackFeature::threshold) {
      const ThresholdAttack th = fit_threshold(row_means(rows), labels_of(rows));
      nlohmann::ordered_json j;
      j["tau"] = th.tau;
      j["balanced_accuracy"] = th.balanced_accuracy;
      write_text(out_dir() / "attack_threshold.json", j.dump(2) + "\n");
      threshold_ = th;
    } else {
      AttackModel model =
          train_attack_model(AttackDataset::from_rows(rows), config_.attack.model, attack_train_config(config_));
      std::filesystem::create_directories(out_dir());
      model.save(out_dir() / "attack.bin");
      attack_model_ = std::move(model);
    }
    return 0;
  });
}

RunSummary Experiment::evaluate() {
  if (!attack_model_ && !threshold_) train_attack();
  const auto& rows = target_features();
  return in_stage("evaluate", [&] {
    RunSummary sum;
    const bool thresh = config_.attack.feature == AttackFeature::threshold;
    std::vector<double> scores;
    if (thresh) {
      for (double m : row_means(rows)) scores.push_back(threshold_->score(m));
    } else {
      scores = attack_model_->predict(rows);
    }
    const auto labels = labels_of(rows);
    const std::string digest = experiment_digest(config_);
    sum.report = evaluate_scores(scores, labels, thresh ? 0.0 : 0.5, digest);
    sum.timesteps = timesteps().steps;
    sum.effective_best_step = best_step_;
    sum.feature_dim = rows.empty() ? 0 : rows.front().values.size();
    sum.target_final_loss = target_final_loss_;
    shadows();
    sum.shadow_final_losses = shadow_final_losses_;

    if (!thresh) {
      const auto losses = target_mean_losses();
      std::vector<double> ml, nl, ms, ns;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        (labels[i] == 1 ? ml : nl).push_back(losses[i]);
        (labels[i] == 1 ? ms : ns).push_back(scores[i]);
      }
      const auto lm = loss_matched_pairs(ml, nl, ms, ns, config_.attack.loss_round);
      sum.loss_matched = LossMatchSummary{config_.attack.loss_round, lm.pairs.size(), lm.correct, lm.accuracy};
    }

    std::ostringstream sc;
    sc << "sample_id,label,score\n" << std::setprecision(17);
    for (std::size_t i = 0; i < rows.size(); ++i) sc << rows[i].sample_id << ',' << labels[i] << ',' << scores[i] << '\n';
    write_text(out_dir() / "scores.csv", sc.str());
    std::filesystem::create_directories(out_dir());
    write_roc_csv(out_dir() / "roc.csv", roc_curve(scores, labels));
    emit_roc_plot(out_dir() / "roc.csv", out_dir() / "roc.svg", false);
    emit_roc_plot(out_dir() / "roc.csv", out_dir() / "roc_log.svg", true);
    write_text(out_dir() / "config.ini", to_ini(config_));
    write_text(out_dir() / "report.json", report_json(config_, sum));
    log_stage("evaluate", "AUC " + std::to_string(sum.report.auc) + ", ASR " + std::to_string(sum.report.asr));
    return sum;
  });
}

RunSummary Experiment::run() {
  target();
  shadows();
  shadow_features();
  target_features();
  train_attack();
  return evaluate();
}

RunSummary run_experiment(const ExperimentConfig& config) {
  Experiment exp(config);
  return exp.run();
}

std::string report_json(const ExperimentConfig& config, const RunSummary& s) {
  nlohmann::ordered_json j;
  j["config_digest"] = s.report.config_digest;
  j["seed"] = config.run.seed;
  j["attack"] = to_string(config.attack.feature);
  j["attack_model"] = config.attack.feature == AttackFeature::threshold ? "threshold" : to_string(config.attack.model);
  j["defense"] = to_string(config.defense.spec.kind);
  j["sampler"] = to_string(config.features.sampler);
  j["timesteps"] = s.timesteps;
  if (s.effective_best_step) j["effective_best_step"] = *s.effective_best_step;
  j["layer_fraction"] = config.features.layer_fraction;
  j["feature_dim"] = s.feature_dim;
  j["asr"] = s.report.asr;
  j["auc"] = s.report.auc;
  j["tpr_at_1pct_fpr"] = s.report.tpr_at_1pct_fpr;
  j["tpr_at_01pct_fpr"] = s.report.tpr_at_01pct_fpr;
  j["n_members"] = s.report.n_members;
  j["n_nonmembers"] = s.report.n_nonmembers;
  j["target_final_loss"] = s.target_final_loss;
  j["shadow_final_losses"] = s.shadow_final_losses;
  if (s.loss_matched) {
    j["loss_matched"] = {{"round_to", s.loss_matched->round_to},
                         {"pairs", s.loss_matched->pairs},
                         {"correct", s.loss_matched->correct},
                         {"accuracy", s.loss_matched->accuracy}};
  }
  return j.dump(2) + "\n";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "epochs") return SweepAxis::epochs;
  if (name == "sample_times") return SweepAxis::sample_times;
  if (name == "diffusion_steps") return SweepAxis::diffusion_steps;
  if (name == "resolution") return SweepAxis::resolution;
  if (name == "layer_fraction") return SweepAxis::layer_fraction;
  if (name == "sampler_method") return SweepAxis::sampler_method;
  throw ConfigError("unknown sweep axis '" + name +
                    "' (epochs|sample_times|diffusion_steps|resolution|layer_fraction|sampler_method)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::epochs: return "epochs";
    case SweepAxis::sample_times: return "sample_times";
    case SweepAxis::diffusion_steps: return "diffusion_steps";
    case SweepAxis::resolution: return "resolution";
    case SweepAxis::layer_fraction: return "layer_fraction";
    case SweepAxis::sampler_method: return "sampler_method";
  }
  return "?";
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "axis_value,asr,auc,tpr1,tpr01\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.axis_value << ',' << r.report.asr << ',' << r.report.auc << ',' << r.report.tpr_at_1pct_fpr << ','
       << r.report.tpr_at_01pct_fpr << '\n';
  }
  write_text(path, os.str());
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  static const std::map<SweepAxis, std::string> keys = {
      {SweepAxis::epochs, "target.epochs"},           {SweepAxis::sample_times, "features.k"},
      {SweepAxis::diffusion_steps, "schedule.steps"}, {SweepAxis::resolution, "data.side"},
      {SweepAxis::layer_fraction, "features.layer_fraction"}, {SweepAxis::sampler_method, "features.sampler"},
  };
  const std::string name = to_string(axis);
  std::vector<ExperimentConfig> runs;
  for (const auto& v : values) {
    ExperimentConfig c = config;
    apply_override(c, keys.at(axis), v);
    c.run.out = config.run.out / ("sweep_" + name) / v;
    c.run.cache = config.cache_dir();
    c.validate();
    runs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    log_stage("sweep", name + " = " + values[i]);
    rows.push_back({values[i], run_experiment(runs[i]).report});
  }
  const auto csv = config.run.out / ("sweep_" + name + ".csv");
  write_sweep_csv(csv, rows);
  emit_sweep_plot(csv, config.run.out / ("sweep_" + name + ".svg"), name);
  return rows;
}

}  // namespace gsamia
