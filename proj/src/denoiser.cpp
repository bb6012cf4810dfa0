#include "gsamia/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "gsamia/container.hpp"

namespace gsamia {

namespace {

constexpr const char* kMagic = "GSAMIA01";
constexpr std::uint32_t kVersion = 1;

}  // namespace

TimeEmbedding::TimeEmbedding(std::size_t dim, int max_t) : dim_(dim), max_t_(max_t) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even and >= 2");
  if (max_t < 1) throw std::invalid_argument("time embedding max_t must be >= 1");
  const std::size_t half = dim / 2;
  freqs_.resize(half);
  for (std::size_t i = 0; i < half; ++i) {
    const double frac = half > 1 ? static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
    freqs_[i] = std::pow(10000.0, -frac);
  }
}

std::vector<double> TimeEmbedding::operator()(int t) const {
  const std::size_t half = dim_ / 2;
  std::vector<double> e(dim_);
  for (std::size_t i = 0; i < half; ++i) {
    const double a = static_cast<double>(t) * freqs_[i];
    e[i] = std::sin(a);
    e[half + i] = std::cos(a);
  }
  return e;
}

Tensor TimeEmbedding::batch(std::span<const int> ts) const {
  Tensor out({ts.size(), dim_});
  for (std::size_t r = 0; r < ts.size(); ++r) {
    const auto e = (*this)(ts[r]);
    for (std::size_t c = 0; c < dim_; ++c) out.at(r, c) = e[c];
  }
  return out;
}

DenoiserNet::DenoiserNet(DenoiserConfig config)
    : config_(std::move(config)), embed_(config_.embed_dim, config_.max_t) {}

DenoiserNet DenoiserNet::init(const DenoiserConfig& config, Rng& rng) {
  if (config.hidden_widths.empty()) throw std::invalid_argument("denoiser needs at least one hidden layer");
  if (config.input_shape.numel() == 0) throw std::invalid_argument("denoiser input shape is empty");
  for (auto w : config.hidden_widths) {
    if (w == 0) throw std::invalid_argument("denoiser hidden width must be positive");
  }
  DenoiserNet net(config);
  std::vector<std::size_t> dims;
  dims.push_back(config.input_shape.numel() + config.embed_dim);
  dims.insert(dims.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  dims.push_back(config.input_shape.numel());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor w({fan_in, fan_out});
    for (auto& v : w.data()) v = std * rng.normal();
    const std::string prefix = "fc" + std::to_string(l);
    net.params_.emplace_back(prefix + ".weight", std::move(w));
    net.params_.emplace_back(prefix + ".bias", Tensor({fan_out}));
  }
  return net;
}

void DenoiserNet::check_timestep(int t) const {
  if (t < 1 || t > config_.max_t) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(config_.max_t) + "]");
  }
}

Var DenoiserNet::forward(Tape& tape, Var x, std::span<const int> ts) {
  const auto& xs = x.shape();
  if (xs.size() != 2 || xs[1] != config_.input_shape.numel() || xs[0] != ts.size()) {
    throw std::invalid_argument("DenoiserNet::forward: input " + shape_str(xs) + " does not match [" +
                                std::to_string(ts.size()) + "," +
                                std::to_string(config_.input_shape.numel()) + "]");
  }
  for (int t : ts) check_timestep(t);
  Var h = concat_cols(x, tape.constant(embed_.batch(ts)));
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_bias(matmul(h, tape.param(params_[2 * l])), tape.param(params_[2 * l + 1]));
    if (l + 1 < layers) h = silu(h);
  }
  return h;
}

Tensor DenoiserNet::forward(const Tensor& x_t, int t) {
  if (x_t.shape() != config_.input_shape.shape()) {
    throw std::invalid_argument("DenoiserNet::forward: image shape " + shape_str(x_t.shape()) +
                                " != " + shape_str(config_.input_shape.shape()));
  }
  Tape tape;
  const int ts[] = {t};
  Var out = forward(tape, tape.constant(x_t.reshaped({1, x_t.numel()})), ts);
  return out.value().reshaped(x_t.shape());
}

std::vector<std::pair<std::string, Parameter*>> DenoiserNet::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.emplace_back(p.name, &p);
  return out;
}

std::vector<Parameter*> DenoiserNet::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t DenoiserNet::num_weights() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void DenoiserNet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void DenoiserNet::save(const std::filesystem::path& path) const {
  Container c;
  c.magic = kMagic;
  c.version = kVersion;
  const auto& s = config_.input_shape;
  c.header = {static_cast<std::uint32_t>(s.channels), static_cast<std::uint32_t>(s.height),
              static_cast<std::uint32_t>(s.width),
              static_cast<std::uint32_t>(config_.hidden_widths.size())};
  for (auto w : config_.hidden_widths) c.header.push_back(static_cast<std::uint32_t>(w));
  c.header.push_back(static_cast<std::uint32_t>(config_.embed_dim));
  c.header.push_back(static_cast<std::uint32_t>(params_.size()));
  c.payload.reserve(num_weights());
  for (const auto& p : params_) c.payload.insert(c.payload.end(), p.value.data().begin(), p.value.data().end());
  write_container(path, c);
}

DenoiserNet DenoiserNet::load(const std::filesystem::path& path, int max_t) {
  const Container c = read_container(path, kMagic);
  if (c.version != kVersion) throw std::runtime_error(path.string() + ": unsupported version");
  const auto& h = c.header;
  if (h.size() < 4 || h.size() != 4 + h[3] + 2) {
    throw std::runtime_error(path.string() + ": malformed denoiser header");
  }
  DenoiserConfig cfg;
  cfg.input_shape = {h[0], h[1], h[2]};
  cfg.hidden_widths.assign(h.begin() + 4, h.begin() + 4 + h[3]);
  cfg.embed_dim = h[4 + h[3]];
  cfg.max_t = max_t;
  Rng dummy(0);
  DenoiserNet net = init(cfg, dummy);
  if (net.params_.size() != h.back()) throw std::runtime_error(path.string() + ": layer count mismatch");
  if (c.payload.size() != net.num_weights()) throw std::runtime_error(path.string() + ": payload size mismatch");
  std::size_t off = 0;
  for (auto& p : net.params_) {
    std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(off), p.value.numel(), p.value.data().begin());
    off += p.value.numel();
  }
  return net;
}

}  // namespace gsamia
