#include "gsamia/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gsamia/parallel.hpp"

namespace gsamia {

SamplerMethod parse_sampler(const std::string& name) {
  if (name == "equidistant") return SamplerMethod::equidistant;
  if (name == "poisson") return SamplerMethod::poisson;
  if (name == "effective") return SamplerMethod::effective;
  throw std::invalid_argument("unknown sampler '" + name + "'");
}

std::string to_string(SamplerMethod method) {
  switch (method) {
    case SamplerMethod::equidistant: return "equidistant";
    case SamplerMethod::poisson: return "poisson";
    case SamplerMethod::effective: return "effective";
  }
  return "equidistant";
}

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "gsa1") return FeatureKind::gsa1;
  if (name == "gsa2") return FeatureKind::gsa2;
  if (name == "lsa") return FeatureKind::lsa;
  throw std::invalid_argument("unknown feature kind '" + name + "'");
}

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::gsa1: return "gsa1";
    case FeatureKind::gsa2: return "gsa2";
    case FeatureKind::lsa: return "lsa";
  }
  return "gsa2";
}

namespace {

void check_k(int T, int k) {
  if (T < 1) throw std::invalid_argument("sampler: T must be >= 1");
  if (k < 1 || k > T) {
    throw std::invalid_argument("sampler: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(T) + "]");
  }
}

void check_set(const TimestepSet& K, const NoiseSchedule& schedule) {
  if (K.steps.empty()) throw std::invalid_argument("timestep set is empty");
  for (int t : K.steps) schedule.check_timestep(t);
}

double layer_norm(const Tensor& grad, bool squared) {
  double s = 0.0;
  for (double g : grad.data()) s += g * g;
  return squared ? s : std::sqrt(s);
}

}  // namespace

TimestepSet equidistant_sample(int T, int k) {
  check_k(T, k);
  TimestepSet out{{}, SamplerMethod::equidistant};
  const int stride = T / k;
  for (int i = 0; i < k; ++i) out.steps.push_back(1 + i * stride);
  return out;
}

TimestepSet poisson_sample(int T, int k, Rng& rng, std::vector<double>* gaps) {
  check_k(T, k);
  const double rate = static_cast<double>(k) / static_cast<double>(T);
  std::vector<bool> taken(static_cast<std::size_t>(T) + 1, false);
  TimestepSet out{{}, SamplerMethod::poisson};
  double pos = 0.0;
  while (static_cast<int>(out.steps.size()) < k) {
    const double gap = rng.exponential(rate);
    if (gaps) gaps->push_back(gap);
    pos += gap;
    const auto up = static_cast<long long>(std::ceil(pos));
    const auto t = static_cast<int>(((up - 1) % T + T) % T) + 1;
    if (taken[static_cast<std::size_t>(t)]) continue;
    taken[static_cast<std::size_t>(t)] = true;
    out.steps.push_back(t);
  }
  std::sort(out.steps.begin(), out.steps.end());
  return out;
}

TimestepSet effective_window(int t_star, int T, int k) {
  check_k(T, k);
  if (t_star < 1 || t_star > T) throw std::invalid_argument("effective_window: t* outside [1, T]");
  const int start = std::clamp(t_star - k / 2, 1, T - k + 1);
  TimestepSet out{{}, SamplerMethod::effective};
  for (int i = 0; i < k; ++i) out.steps.push_back(start + i);
  return out;
}

TimestepSet effective_sample(const std::function<double(int)>& score_at, int T, int k, int stride,
                             int* best_step) {
  check_k(T, k);
  if (stride < 1) throw std::invalid_argument("effective_sample: stride must be >= 1");
  int best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int t = 1; t <= T; t += stride) {
    const double s = score_at(t);
    if (std::isnan(s)) throw std::runtime_error("effective_sample: score is NaN at t=" + std::to_string(t));
    if (s > best_score) {
      best_score = s;
      best = t;
    }
  }
  if (best_step) *best_step = best;
  return effective_window(best, T, k);
}

Tensor feature_noise(std::uint64_t root_seed, std::uint64_t sample_id, int t, int repeat,
                     const Shape& shape) {
  Rng rng(derive_seed(root_seed, {sample_id, static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(repeat)}));
  return gaussian_sample(rng, shape);
}

std::vector<double> gsa1(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                         std::uint64_t sample_id, const TimestepSet& K, const FeatureOptions& opt) {
  check_set(K, schedule);
  const auto params = net.parameters();
  Tape tape;
  Var total;
  bool first = true;
  for (int t : K.steps) {
    for (int r = 0; r < opt.repeats; ++r) {
      const Tensor eps = feature_noise(opt.root_seed, sample_id, t, r, x0.shape());
      Var loss = diffusion_loss(tape, net, schedule, x0, t, eps);
      total = first ? loss : add(total, loss);
      first = false;
    }
  }
  const double count = static_cast<double>(K.size()) * opt.repeats;
  Var mean_loss = scale(total, 1.0 / count);
  for (auto* p : params) p->zero_grad();
  tape.backward(mean_loss);
  std::vector<double> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(layer_norm(p->grad, opt.squared));
  return out;
}

std::vector<double> gsa2(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                         std::uint64_t sample_id, const TimestepSet& K, const FeatureOptions& opt) {
  check_set(K, schedule);
  const auto params = net.parameters();
  std::vector<double> acc(params.size(), 0.0);
  for (int t : K.steps) {
    for (int r = 0; r < opt.repeats; ++r) {
      const Tensor eps = feature_noise(opt.root_seed, sample_id, t, r, x0.shape());
      Tape tape;
      Var loss = diffusion_loss(tape, net, schedule, x0, t, eps);
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) acc[i] += layer_norm(params[i]->grad, opt.squared);
    }
  }
  const double count = static_cast<double>(K.size()) * opt.repeats;
  for (auto& v : acc) v /= count;
  for (auto* p : params) p->zero_grad();
  return acc;
}

std::vector<double> lsa_features(NoisePredictor& net, const NoiseSchedule& schedule,
                                 const Tensor& x0, std::uint64_t sample_id, const TimestepSet& K,
                                 const FeatureOptions& opt) {
  check_set(K, schedule);
  std::vector<double> out;
  out.reserve(K.size());
  for (int t : K.steps) {
    double s = 0.0;
    for (int r = 0; r < opt.repeats; ++r) {
      const Tensor eps = feature_noise(opt.root_seed, sample_id, t, r, x0.shape());
      s += diffusion_loss_value(net, schedule, x0, t, eps);
    }
    out.push_back(s / opt.repeats);
  }
  return out;
}

FeatureRows extract_features(const DenoiserNet& net, const NoiseSchedule& schedule,
                             const Tensor& images, const std::vector<std::uint64_t>& ids,
                             const std::vector<int>& labels, const TimestepSet& K,
                             FeatureKind kind, const FeatureOptions& opt, std::size_t workers) {
  if (images.rank() != 4) throw std::invalid_argument("extract_features: expected [n,C,H,W] images");
  const std::size_t n = images.dim(0);
  if (ids.size() != n || labels.size() != n) {
    throw std::invalid_argument("extract_features: ids/labels do not match image count");
  }
  const Shape img_shape(images.shape().begin() + 1, images.shape().end());
  const std::size_t d = shape_numel(img_shape);
  FeatureRows rows(n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<DenoiserNet> nets(workers, net);
  parallel_for(n, workers, [&](std::size_t i, std::size_t w) {
    Tensor x0(img_shape);
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * d), d, x0.data().begin());
    FeatureVector fv;
    fv.sample_id = ids[i];
    fv.label = labels[i];
    switch (kind) {
      case FeatureKind::gsa1: fv.values = gsa1(nets[w], schedule, x0, ids[i], K, opt); break;
      case FeatureKind::gsa2: fv.values = gsa2(nets[w], schedule, x0, ids[i], K, opt); break;
      case FeatureKind::lsa: fv.values = lsa_features(nets[w], schedule, x0, ids[i], K, opt); break;
    }
    rows[i] = std::move(fv);
  });
  return rows;
}

std::size_t layer_count_for_fraction(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("layer fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::min(keep, n);
}

FeatureRows select_layers(const FeatureRows& rows, double top_fraction) {
  if (rows.empty()) return {};
  const std::size_t keep = layer_count_for_fraction(rows.front().values.size(), top_fraction);
  if (keep == 0) throw std::invalid_argument("select_layers: no coordinates selected");
  FeatureRows out = rows;
  for (auto& r : out) {
    if (r.values.size() != rows.front().values.size()) {
      throw std::invalid_argument("select_layers: ragged feature rows");
    }
    r.values.resize(keep);
  }
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureRows& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::size_t n = rows.empty() ? 0 : rows.front().values.size();
  os << "sample_id,label";
  for (std::size_t i = 1; i <= n; ++i) os << ",f_" << i;
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.sample_id << ',' << r.label;
    for (double v : r.values) os << ',' << v;
    os << '\n';
  }
}

FeatureRows read_feature_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("sample_id,label", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing feature header");
  }
  const auto ncols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  FeatureRows rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    FeatureVector fv;
    std::getline(ss, cell, ',');
    fv.sample_id = std::stoull(cell);
    std::getline(ss, cell, ',');
    fv.label = std::stoi(cell);
    while (std::getline(ss, cell, ',')) fv.values.push_back(std::stod(cell));
    if (fv.values.size() + 2 != ncols) throw std::runtime_error(path.string() + ": ragged row");
    rows.push_back(std::move(fv));
  }
  return rows;
}

}  // namespace gsamia
