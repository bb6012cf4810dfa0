#include "gsamia/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace gsamia {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string key_name(const std::string& section, const std::string& key) {
  return section + "." + key;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError("config: " + key + " = '" + value + "': " + what);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "expected a finite number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "expected true or false");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) bad_value(key, v, "expected a comma-separated list of widths");
  return out;
}

template <class F>
auto parse_enum(const std::string& key, const std::string& v, F&& parse) {
  try {
    return parse(v);
  } catch (const std::exception& e) {
    bad_value(key, v, e.what());
  }
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown lr schedule '" + name + "'");
}

std::string lr_schedule_name(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.source", [](auto& c, auto& k, auto& v) { c.data.source = parse_enum(k, v, parse_data_source); }},
      {"data.path", [](auto& c, auto&, auto& v) { c.data.path = v; }},
      {"data.count", [](auto& c, auto& k, auto& v) { c.data.count = parse_size(k, v); }},
      {"data.side", [](auto& c, auto& k, auto& v) { c.data.side = parse_size(k, v); }},
      {"data.classes", [](auto& c, auto& k, auto& v) { c.data.classes = parse_size(k, v); }},
      {"split.members", [](auto& c, auto& k, auto& v) { c.split.members = parse_size(k, v); }},
      {"split.nonmembers", [](auto& c, auto& k, auto& v) { c.split.nonmembers = parse_size(k, v); }},
      {"split.shadow_pool", [](auto& c, auto& k, auto& v) { c.split.shadow_pool = parse_size(k, v); }},
      {"split.shadow_members", [](auto& c, auto& k, auto& v) { c.split.shadow_members = parse_size(k, v); }},
      {"schedule.kind", [](auto& c, auto& k, auto& v) { c.schedule.kind = parse_enum(k, v, parse_schedule_kind); }},
      {"schedule.steps", [](auto& c, auto& k, auto& v) { c.schedule.steps = parse_int(k, v); }},
      {"schedule.beta_start", [](auto& c, auto& k, auto& v) { c.schedule.beta_start = parse_double(k, v); }},
      {"schedule.beta_end", [](auto& c, auto& k, auto& v) { c.schedule.beta_end = parse_double(k, v); }},
      {"schedule.cosine_s", [](auto& c, auto& k, auto& v) { c.schedule.cosine_s = parse_double(k, v); }},
      {"model.widths", [](auto& c, auto& k, auto& v) { c.model.widths = parse_widths(k, v); }},
      {"model.embed_dim", [](auto& c, auto& k, auto& v) { c.model.embed_dim = parse_size(k, v); }},
      {"target.epochs", [](auto& c, auto& k, auto& v) { c.target.epochs = parse_int(k, v); }},
      {"target.batch_size", [](auto& c, auto& k, auto& v) { c.target.batch_size = parse_size(k, v); }},
      {"target.learning_rate", [](auto& c, auto& k, auto& v) { c.target.learning_rate = parse_double(k, v); }},
      {"target.lr_schedule", [](auto& c, auto& k, auto& v) { c.target.lr_schedule = parse_enum(k, v, parse_lr_schedule); }},
      {"shadow.count", [](auto& c, auto& k, auto& v) { c.shadow.count = parse_size(k, v); }},
      {"shadow.epochs", [](auto& c, auto& k, auto& v) { c.shadow.epochs = parse_int(k, v); }},
      {"shadow.batch_size", [](auto& c, auto& k, auto& v) { c.shadow.batch_size = parse_size(k, v); }},
      {"shadow.learning_rate", [](auto& c, auto& k, auto& v) { c.shadow.learning_rate = parse_double(k, v); }},
      {"shadow.lr_schedule", [](auto& c, auto& k, auto& v) { c.shadow.lr_schedule = parse_enum(k, v, parse_lr_schedule); }},
      {"features.sampler", [](auto& c, auto& k, auto& v) { c.features.sampler = parse_enum(k, v, parse_sampler); }},
      {"features.k", [](auto& c, auto& k, auto& v) { c.features.k = parse_int(k, v); }},
      {"features.layer_fraction", [](auto& c, auto& k, auto& v) { c.features.layer_fraction = parse_double(k, v); }},
      {"features.repeats", [](auto& c, auto& k, auto& v) { c.features.repeats = parse_int(k, v); }},
      {"features.squared", [](auto& c, auto& k, auto& v) { c.features.squared = parse_bool(k, v); }},
      {"features.effective_stride", [](auto& c, auto& k, auto& v) { c.features.effective_stride = parse_int(k, v); }},
      {"attack.kind", [](auto& c, auto& k, auto& v) { c.attack.feature = parse_enum(k, v, parse_attack_feature); }},
      {"attack.model", [](auto& c, auto& k, auto& v) { c.attack.model = parse_enum(k, v, parse_attack_kind); }},
      {"attack.l2", [](auto& c, auto& k, auto& v) { c.attack.l2 = parse_double(k, v); }},
      {"attack.hidden", [](auto& c, auto& k, auto& v) { c.attack.hidden = parse_size(k, v); }},
      {"attack.learning_rate", [](auto& c, auto& k, auto& v) { c.attack.learning_rate = parse_double(k, v); }},
      {"attack.max_epochs", [](auto& c, auto& k, auto& v) { c.attack.max_epochs = parse_int(k, v); }},
      {"attack.patience", [](auto& c, auto& k, auto& v) { c.attack.patience = parse_int(k, v); }},
      {"attack.loss_round", [](auto& c, auto& k, auto& v) { c.attack.loss_round = parse_double(k, v); }},
      {"defense.kind", [](auto& c, auto& k, auto& v) { c.defense.spec.kind = parse_enum(k, v, parse_defense); }},
      {"defense.clip", [](auto& c, auto& k, auto& v) { c.defense.spec.dp.clip_bound = parse_double(k, v); }},
      {"defense.sigma", [](auto& c, auto& k, auto& v) { c.defense.spec.dp.noise_multiplier = parse_double(k, v); }},
      {"defense.delta", [](auto& c, auto& k, auto& v) { c.defense.spec.dp.delta = parse_double(k, v); }},
      {"defense.flip_prob", [](auto& c, auto& k, auto& v) { c.defense.spec.augmentation.flip_prob = parse_double(k, v); }},
      {"defense.cutout_prob", [](auto& c, auto& k, auto& v) { c.defense.spec.augmentation.cutout_prob = parse_double(k, v); }},
      {"defense.cutout_size", [](auto& c, auto& k, auto& v) { c.defense.spec.augmentation.cutout_size = parse_size(k, v); }},
      {"defense.brightness", [](auto& c, auto& k, auto& v) { c.defense.spec.augmentation.brightness = parse_double(k, v); }},
      {"defense.translate", [](auto& c, auto& k, auto& v) { c.defense.spec.augmentation.translate = parse_size(k, v); }},
      {"defense.apply_to_shadows", [](auto& c, auto& k, auto& v) { c.defense.apply_to_shadows = parse_bool(k, v); }},
      {"run.seed", [](auto& c, auto& k, auto& v) { c.run.seed = parse_u64(k, v); }},
      {"run.out", [](auto& c, auto&, auto& v) { c.run.out = v; }},
      {"run.workers", [](auto& c, auto& k, auto& v) { c.run.workers = parse_size(k, v); }},
      {"run.cache", [](auto& c, auto&, auto& v) { c.run.cache = v; }},
  };
  return table;
}

}  // namespace

AttackFeature parse_attack_feature(const std::string& name) {
  if (name == "gsa1") return AttackFeature::gsa1;
  if (name == "gsa2") return AttackFeature::gsa2;
  if (name == "lsa") return AttackFeature::lsa;
  if (name == "threshold") return AttackFeature::threshold;
  throw std::invalid_argument("unknown attack '" + name + "' (gsa1|gsa2|lsa|threshold)");
}

std::string to_string(AttackFeature kind) {
  switch (kind) {
    case AttackFeature::gsa1: return "gsa1";
    case AttackFeature::gsa2: return "gsa2";
    case AttackFeature::lsa: return "lsa";
    case AttackFeature::threshold: return "threshold";
  }
  return "?";
}

NoiseSchedule ScheduleSpec::build() const {
  return kind == ScheduleKind::cosine ? make_cosine_schedule(steps, cosine_s)
                                      : make_linear_schedule(steps, beta_start, beta_end);
}

TrainSpec ShadowSpec::resolve(const TrainSpec& target) const {
  TrainSpec out = target;
  if (epochs) out.epochs = *epochs;
  if (batch_size) out.batch_size = *batch_size;
  if (learning_rate) out.learning_rate = *learning_rate;
  if (lr_schedule) out.lr_schedule = *lr_schedule;
  return out;
}

std::filesystem::path ExperimentConfig::cache_dir() const {
  return run.cache.empty() ? run.out / "cache" : run.cache;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(data.count >= 1, "data.count must be >= 1");
  if (data.source == DataSource::synthetic) {
    require(data.side == 8 || data.side == 16 || data.side == 32, "data.side must be 8, 16 or 32");
    require(data.classes >= 1, "data.classes must be >= 1");
  } else {
    require(!data.path.empty(), "data.path is required for source " + to_string(data.source));
  }
  require(split.members >= 2 && split.nonmembers >= 2, "split.members and split.nonmembers must be >= 2");
  require(split.members == split.nonmembers, "split.members must equal split.nonmembers (ASR needs balanced sets)");
  require(split.shadow_members >= 2, "split.shadow_members must be >= 2");
  require(2 * split.shadow_members <= split.shadow_pool, "split.shadow_pool must hold 2 * split.shadow_members");
  require(split.members + split.nonmembers + split.shadow_pool <= data.count,
          "data.count must cover split.members + split.nonmembers + split.shadow_pool");
  require(schedule.steps >= 1, "schedule.steps must be >= 1");
  require(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0,
          "schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  require(schedule.cosine_s > 0.0, "schedule.cosine_s must be positive");
  require(!model.widths.empty(), "model.widths must not be empty");
  for (auto w : model.widths) require(w >= 1, "model.widths entries must be >= 1");
  require(model.embed_dim >= 2 && model.embed_dim % 2 == 0, "model.embed_dim must be even and >= 2");
  for (const TrainSpec& t : {target, shadow.resolve(target)}) {
    require(t.epochs >= 1, "epochs must be >= 1");
    require(t.batch_size >= 1, "batch_size must be >= 1");
    require(t.learning_rate >= 0.0, "learning_rate must be >= 0");
  }
  require(shadow.count >= 1, "shadow.count must be >= 1");
  require(features.k >= 1 && features.k <= schedule.steps, "features.k must lie in [1, schedule.steps]");
  require(features.layer_fraction > 0.0 && features.layer_fraction <= 1.0,
          "features.layer_fraction must lie in (0, 1]");
  require(features.repeats >= 1, "features.repeats must be >= 1");
  require(features.effective_stride >= 1, "features.effective_stride must be >= 1");
  require(attack.l2 >= 0.0, "attack.l2 must be >= 0");
  require(attack.hidden >= 1, "attack.hidden must be >= 1");
  require(attack.learning_rate > 0.0, "attack.learning_rate must be positive");
  require(attack.max_epochs >= 1 && attack.patience >= 1, "attack.max_epochs and attack.patience must be >= 1");
  require(attack.loss_round > 0.0, "attack.loss_round must be positive");
  try {
    if (defense.spec.kind == DefenseKind::dpsgd) defense.spec.dp.validate();
    if (defense.spec.augments()) {
      const std::size_t side = data.source == DataSource::synthetic ? data.side : 32;
      defense.spec.augmentation.validate(side, side);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: defense: ") + e.what());
  }
}

IniDocument parse_ini(const std::string& text) {
  IniDocument doc;
  std::string section;
  std::istringstream is(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      doc[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    doc[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return doc;
}

void apply_override(ExperimentConfig& config, const std::string& dotted_key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(dotted_key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + dotted_key + "'");
  it->second(config, dotted_key, value);
}

ExperimentConfig config_from_ini(const IniDocument& doc) {
  ExperimentConfig config;
  for (const auto& [section, keys] : doc) {
    for (const auto& [key, value] : keys) apply_override(config, key_name(section, key), value);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_ini(parse_ini(ss.str()));
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  const auto& aug = c.defense.spec.augmentation;
  os << "[data]\nsource = " << to_string(c.data.source) << "\npath = " << c.data.path.string()
     << "\ncount = " << c.data.count << "\nside = " << c.data.side << "\nclasses = " << c.data.classes
     << "\n\n[split]\nmembers = " << c.split.members << "\nnonmembers = " << c.split.nonmembers
     << "\nshadow_pool = " << c.split.shadow_pool << "\nshadow_members = " << c.split.shadow_members
     << "\n\n[schedule]\nkind = " << to_string(c.schedule.kind) << "\nsteps = " << c.schedule.steps
     << "\nbeta_start = " << fmt(c.schedule.beta_start) << "\nbeta_end = " << fmt(c.schedule.beta_end)
     << "\ncosine_s = " << fmt(c.schedule.cosine_s)
     << "\n\n[model]\nwidths = " << join_widths(c.model.widths) << "\nembed_dim = " << c.model.embed_dim
     << "\n\n[target]\nepochs = " << c.target.epochs << "\nbatch_size = " << c.target.batch_size
     << "\nlearning_rate = " << fmt(c.target.learning_rate)
     << "\nlr_schedule = " << lr_schedule_name(c.target.lr_schedule) << "\n\n[shadow]\ncount = " << c.shadow.count
     << '\n';
  if (c.shadow.epochs) os << "epochs = " << *c.shadow.epochs << '\n';
  if (c.shadow.batch_size) os << "batch_size = " << *c.shadow.batch_size << '\n';
  if (c.shadow.learning_rate) os << "learning_rate = " << fmt(*c.shadow.learning_rate) << '\n';
  if (c.shadow.lr_schedule) os << "lr_schedule = " << lr_schedule_name(*c.shadow.lr_schedule) << '\n';
  os << "\n[features]\nsampler = " << to_string(c.features.sampler) << "\nk = " << c.features.k
     << "\nlayer_fraction = " << fmt(c.features.layer_fraction) << "\nrepeats = " << c.features.repeats
     << "\nsquared = " << (c.features.squared ? "true" : "false")
     << "\neffective_stride = " << c.features.effective_stride
     << "\n\n[attack]\nkind = " << to_string(c.attack.feature) << "\nmodel = " << to_string(c.attack.model)
     << "\nl2 = " << fmt(c.attack.l2) << "\nhidden = " << c.attack.hidden
     << "\nlearning_rate = " << fmt(c.attack.learning_rate) << "\nmax_epochs = " << c.attack.max_epochs
     << "\npatience = " << c.attack.patience << "\nloss_round = " << fmt(c.attack.loss_round)
     << "\n\n[defense]\nkind = " << to_string(c.defense.spec.kind) << "\nclip = " << fmt(c.defense.spec.dp.clip_bound)
     << "\nsigma = " << fmt(c.defense.spec.dp.noise_multiplier) << "\ndelta = " << fmt(c.defense.spec.dp.delta)
     << "\nflip_prob = " << fmt(aug.flip_prob) << "\ncutout_prob = " << fmt(aug.cutout_prob)
     << "\ncutout_size = " << aug.cutout_size << "\nbrightness = " << fmt(aug.brightness)
     << "\ntranslate = " << aug.translate
     << "\napply_to_shadows = " << (c.defense.apply_to_shadows ? "true" : "false")
     << "\n\n[run]\nseed = " << c.run.seed << "\nout = " << c.run.out.string() << "\nworkers = " << c.run.workers
     << "\ncache = " << c.run.cache.string() << '\n';
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gsamia
