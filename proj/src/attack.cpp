#include "gsamia/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "gsamia/container.hpp"
#include "gsamia/optim.hpp"

namespace gsamia {

namespace {

constexpr const char* kMagic = "GSAATK01";
constexpr std::uint32_t kVersion = 1;

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_value(double x) { return x * logistic(x); }

void require_two_classes(std::span<const int> labels, std::size_t min_per_class, const char* who) {
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l == 1) {
      ++pos;
    } else if (l == 0) {
      ++neg;
    } else {
      throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
    }
  }
  if (pos < min_per_class || neg < min_per_class) {
    throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_per_class) +
                                " rows of each class (got " + std::to_string(pos) + " members, " +
                                std::to_string(neg) + " nonmembers)");
  }
}

AttackModel train_logistic(const std::vector<std::vector<double>>& x, std::span<const int> y,
                           const AttackTrainConfig& cfg) {
  const std::size_t n = x.size(), d = x.front().size();
  double trace = 0.0;
  for (const auto& row : x) {
    trace += 1.0;
    for (double v : row) trace += v * v;
  }
  const double lipschitz = 0.25 * trace / static_cast<double>(n) + cfg.l2;
  const double step = 1.0 / lipschitz;
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto g = logistic_gradient(x, y, w, b, cfg.l2);
    double gn = 0.0;
    for (double v : g) gn += v * v;
    if (std::sqrt(gn) < cfg.tolerance) break;
    for (std::size_t j = 0; j < d; ++j) w[j] -= step * g[j];
    b -= step * g[d];
  }
  AttackModel m;
  m.kind = AttackKind::logistic;
  m.dim = d;
  m.weights = std::move(w);
  m.bias = b;
  return m;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& x, std::span<const std::size_t> idx) {
  const std::size_t d = x.front().size();
  Tensor t({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) t.at(r, c) = x[idx[r]][c];
  return t;
}

Var mlp_logits(Tape& tape, Var xin, std::vector<Parameter>& p) {
  Var h = silu(add_bias(matmul(xin, tape.param(p[0])), tape.param(p[1])));
  Var z = add_bias(matmul(h, tape.param(p[2])), tape.param(p[3]));
  return reshape(z, {z.shape()[0]});
}

AttackModel train_mlp(const std::vector<std::vector<double>>& x, std::span<const int> y,
                      const AttackTrainConfig& cfg) {
  const std::size_t n = x.size(), d = x.front().size(), h = cfg.hidden;
  if (h == 0) throw std::invalid_argument("mlp hidden width must be positive");
  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(idx));
  auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  const std::span<const std::size_t> val_idx(idx.data(), n_val);
  const std::span<const std::size_t> train_idx(idx.data() + n_val, n - n_val);
  const Tensor x_train = rows_to_tensor(x, train_idx);
  const Tensor x_val = rows_to_tensor(x, val_idx);
  Tensor y_train({train_idx.size()}), y_val({val_idx.size()});
  for (std::size_t i = 0; i < train_idx.size(); ++i) y_train[i] = y[train_idx[i]];
  for (std::size_t i = 0; i < val_idx.size(); ++i) y_val[i] = y[val_idx[i]];

  std::vector<Parameter> p;
  {
    Tensor w1({d, h}), w2({h, 1});
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    const double s2 = std::sqrt(2.0 / static_cast<double>(h));
    for (auto& v : w1.data()) v = s1 * rng.normal();
    for (auto& v : w2.data()) v = s2 * rng.normal();
    p.emplace_back("fc0.weight", std::move(w1));
    p.emplace_back("fc0.bias", Tensor({h}));
    p.emplace_back("fc1.weight", std::move(w2));
    p.emplace_back("fc1.bias", Tensor({1}));
  }
  std::vector<Parameter*> ptrs;
  for (auto& q : p) ptrs.push_back(&q);
  Adam adam(ptrs);

  std::vector<Parameter> best = p;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    {
      Tape tape;
      Var loss = bce_with_logits(mlp_logits(tape, tape.constant(x_train), p), y_train);
      for (auto* q : ptrs) q->zero_grad();
      tape.backward(loss);
    }
    adam.step(cfg.learning_rate);
    Tape tape;
    const double val = bce_with_logits(mlp_logits(tape, tape.constant(x_val), p), y_val).value().item();
    if (val < best_val) {
      best_val = val;
      best = p;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  AttackModel m;
  m.kind = AttackKind::mlp;
  m.dim = d;
  m.hidden = h;
  m.w1 = best[0].value.values();
  m.b1 = best[1].value.values();
  m.w2 = best[2].value.values();
  m.b2 = best[3].value[0];
  return m;
}

}  // namespace

ShadowPlan build_shadow_plan(std::size_t pool_size, std::size_t shadow_count,
                             std::size_t per_shadow_train_size, Rng& rng) {
  if (shadow_count == 0) throw std::invalid_argument("shadow plan needs at least one shadow");
  if (per_shadow_train_size == 0) throw std::invalid_argument("shadow training size must be positive");
  if (2 * per_shadow_train_size > pool_size) {
    throw std::invalid_argument("shadow pool of " + std::to_string(pool_size) +
                                " cannot supply " + std::to_string(per_shadow_train_size) +
                                " members plus as many nonmembers");
  }
  ShadowPlan plan;
  std::vector<std::size_t> idx(pool_size);
  for (std::size_t s = 0; s < shadow_count; ++s) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    ShadowSplit split;
    split.members.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_shadow_train_size));
    split.nonmembers.assign(idx.begin() + static_cast<std::ptrdiff_t>(per_shadow_train_size),
                            idx.begin() + static_cast<std::ptrdiff_t>(2 * per_shadow_train_size));
    split.seed = rng.next_u64();
    plan.shadows.push_back(std::move(split));
  }
  return plan;
}

FeatureNormalizer FeatureNormalizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("normalizer: no rows");
  const std::size_t d = rows.front().size();
  FeatureNormalizer f;
  f.mean.assign(d, 0.0);
  f.stddev.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw std::invalid_argument("normalizer: ragged rows");
    for (std::size_t j = 0; j < d; ++j) f.mean[j] += std::log1p(r[j]);
  }
  const double n = static_cast<double>(rows.size());
  for (auto& m : f.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = std::log1p(r[j]) - f.mean[j];
      f.stddev[j] += dv * dv;
    }
  }
  for (auto& s : f.stddev) {
    s = std::sqrt(s / n);
    if (s < 1e-12) s = 1.0;
  }
  return f;
}

std::vector<double> FeatureNormalizer::apply(std::span<const double> raw) const {
  if (raw.size() != mean.size()) {
    throw std::invalid_argument("feature length " + std::to_string(raw.size()) +
                                " does not match normalizer length " + std::to_string(mean.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) out[j] = (std::log1p(raw[j]) - mean[j]) / stddev[j];
  return out;
}

AttackDataset AttackDataset::from_rows(const FeatureRows& shadow_rows) {
  AttackDataset ds;
  for (const auto& r : shadow_rows) {
    if (r.label != 0 && r.label != 1) throw std::invalid_argument("attack dataset rows must be labelled");
    ds.features.push_back(r.values);
    ds.labels.push_back(r.label);
  }
  ds.normalizer = FeatureNormalizer::fit(ds.features);
  return ds;
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "logistic") return AttackKind::logistic;
  if (name == "mlp") return AttackKind::mlp;
  throw std::invalid_argument("unknown attack model '" + name + "'");
}

std::string to_string(AttackKind kind) { return kind == AttackKind::logistic ? "logistic" : "mlp"; }

double logistic_objective(const std::vector<std::vector<double>>& x, std::span<const int> y,
                          std::span<const double> w, double b, double l2) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    s += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return s / static_cast<double>(x.size()) + 0.5 * l2 * reg;
}

std::vector<double> logistic_gradient(const std::vector<std::vector<double>>& x,
                                      std::span<const int> y, std::span<const double> w, double b,
                                      double l2) {
  const std::size_t d = w.size();
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
    const double r = logistic(z) - y[i];
    for (std::size_t j = 0; j < d; ++j) g[j] += r * x[i][j];
    g[d] += r;
  }
  const double inv = 1.0 / static_cast<double>(x.size());
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv + l2 * w[j];
  g[d] *= inv;
  return g;
}

AttackModel train_attack_model(const AttackDataset& data, AttackKind kind,
                               const AttackTrainConfig& config) {
  if (data.features.size() != data.labels.size()) throw std::invalid_argument("attack dataset is ragged");
  require_two_classes(data.labels, 2, "train_attack_model");
  std::vector<std::vector<double>> x;
  x.reserve(data.features.size());
  for (const auto& r : data.features) x.push_back(data.normalizer.apply(r));
  AttackModel m = kind == AttackKind::logistic ? train_logistic(x, data.labels, config)
                                               : train_mlp(x, data.labels, config);
  m.normalizer = data.normalizer;
  m.seed = config.seed;
  return m;
}

double AttackModel::predict(std::span<const double> raw) const {
  if (raw.size() != dim) {
    throw std::invalid_argument("attack model expects " + std::to_string(dim) + " features, got " +
                                std::to_string(raw.size()));
  }
  const auto x = normalizer.apply(raw);
  if (kind == AttackKind::logistic) {
    double z = bias;
    for (std::size_t j = 0; j < dim; ++j) z += weights[j] * x[j];
    return logistic(z);
  }
  double z = b2;
  for (std::size_t k = 0; k < hidden; ++k) {
    double a = b1[k];
    for (std::size_t j = 0; j < dim; ++j) a += x[j] * w1[j * hidden + k];
    z += silu_value(a) * w2[k];
  }
  return logistic(z);
}

std::vector<double> AttackModel::predict(const FeatureRows& rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict(r.values));
  return out;
}

void AttackModel::save(const std::filesystem::path& path) const {
  Container c;
  c.magic = kMagic;
  c.version = kVersion;
  c.header = {kind == AttackKind::logistic ? 0u : 1u, static_cast<std::uint32_t>(dim),
              static_cast<std::uint32_t>(hidden), static_cast<std::uint32_t>(seed & 0xffffffffu),
              static_cast<std::uint32_t>(seed >> 32)};
  auto& p = c.payload;
  p.insert(p.end(), normalizer.mean.begin(), normalizer.mean.end());
  p.insert(p.end(), normalizer.stddev.begin(), normalizer.stddev.end());
  if (kind == AttackKind::logistic) {
    p.insert(p.end(), weights.begin(), weights.end());
    p.push_back(bias);
  } else {
    p.insert(p.end(), w1.begin(), w1.end());
    p.insert(p.end(), b1.begin(), b1.end());
    p.insert(p.end(), w2.begin(), w2.end());
    p.push_back(b2);
  }
  write_container(path, c);
}

AttackModel AttackModel::load(const std::filesystem::path& path) {
  const Container c = read_container(path, kMagic);
  if (c.version != kVersion || c.header.size() != 5) {
    throw std::runtime_error(path.string() + ": malformed attack checkpoint header");
  }
  AttackModel m;
  m.kind = c.header[0] == 0 ? AttackKind::logistic : AttackKind::mlp;
  m.dim = c.header[1];
  m.hidden = c.header[2];
  m.seed = static_cast<std::uint64_t>(c.header[3]) | (static_cast<std::uint64_t>(c.header[4]) << 32);
  const std::size_t d = m.dim, h = m.hidden;
  const std::size_t expect = 2 * d + (m.kind == AttackKind::logistic ? d + 1 : d * h + h + h + 1);
  if (c.payload.size() != expect) throw std::runtime_error(path.string() + ": payload size mismatch");
  auto it = c.payload.begin();
  auto take = [&it](std::size_t k) {
    std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(k));
    it += static_cast<std::ptrdiff_t>(k);
    return v;
  };
  m.normalizer.mean = take(d);
  m.normalizer.stddev = take(d);
  if (m.kind == AttackKind::logistic) {
    m.weights = take(d);
    m.bias = *it;
  } else {
    m.w1 = take(d * h);
    m.b1 = take(h);
    m.w2 = take(h);
    m.b2 = *it;
  }
  return m;
}

ThresholdAttack fit_threshold(std::span<const double> statistics, std::span<const int> labels) {
  if (statistics.size() != labels.size()) throw std::invalid_argument("fit_threshold: length mismatch");
  require_two_classes(labels, 1, "fit_threshold");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg) += 1;

  std::vector<std::size_t> order(statistics.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return statistics[a] < statistics[b]; });

  // tau below every value: everything is a nonmember.
  ThresholdAttack best{statistics[order.front()], 0.5};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = statistics[order[i]];
    while (i < order.size() && statistics[order[i]] == v) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    const double tau = i < order.size() ? 0.5 * (v + statistics[order[i]]) : v + 1.0;
    const double bal = 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                              static_cast<double>(neg - fp) / static_cast<double>(neg));
    if (bal > best.balanced_accuracy) best = {tau, bal};
  }
  return best;
}

std::vector<LossPair> match_loss_pairs(std::span<const double> member_losses,
                                       std::span<const double> nonmember_losses, double round_to) {
  if (!(round_to > 0.0)) throw std::invalid_argument("round_to must be positive");
  std::map<long long, std::queue<std::size_t>> pool;
  for (std::size_t j = 0; j < nonmember_losses.size(); ++j) {
    pool[std::llround(nonmember_losses[j] / round_to)].push(j);
  }
  std::vector<LossPair> pairs;
  for (std::size_t i = 0; i < member_losses.size(); ++i) {
    const long long key = std::llround(member_losses[i] / round_to);
    auto it = pool.find(key);
    if (it == pool.end() || it->second.empty()) continue;
    pairs.push_back({i, it->second.front(), key});
    it->second.pop();
  }
  return pairs;
}

LossMatchResult loss_matched_pairs(std::span<const double> member_losses,
                                   std::span<const double> nonmember_losses,
                                   std::span<const double> member_scores,
                                   std::span<const double> nonmember_scores, double round_to) {
  if (member_scores.size() != member_losses.size() ||
      nonmember_scores.size() != nonmember_losses.size()) {
    throw std::invalid_argument("loss_matched_pairs: scores and losses differ in length");
  }
  LossMatchResult res;
  res.pairs = match_loss_pairs(member_losses, nonmember_losses, round_to);
  for (const auto& p : res.pairs) {
    if (member_scores[p.member] >= 0.5) ++res.correct;
    if (nonmember_scores[p.nonmember] < 0.5) ++res.correct;
  }
  if (!res.pairs.empty()) {
    res.accuracy = static_cast<double>(res.correct) / (2.0 * static_cast<double>(res.pairs.size()));
  }
  return res;
}

}  // namespace gsamia
