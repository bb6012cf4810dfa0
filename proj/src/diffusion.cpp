#include "gsamia/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace gsamia {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown noise schedule '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

void NoiseSchedule::check_timestep(int t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
}

NoiseSchedule schedule_from_betas(ScheduleKind kind, std::vector<double> betas) {
  NoiseSchedule s;
  s.kind = kind;
  s.T = static_cast<int>(betas.size());
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta values must lie in (0, 1)");
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(std::sqrt(b));
  }
  return s;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("linear schedule needs 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    const double frac = T > 1 ? static_cast<double>(i) / static_cast<double>(T - 1) : 0.0;
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return schedule_from_betas(ScheduleKind::linear, std::move(betas));
}

NoiseSchedule make_cosine_schedule(int T, double s, double max_beta) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  auto f = [&](double t) {
    const double c = std::cos(((t / T + s) / (1.0 + s)) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    betas[static_cast<std::size_t>(t - 1)] = std::min(1.0 - f(t) / f(t - 1), max_beta);
  }
  return schedule_from_betas(ScheduleKind::cosine, std::move(betas));
}

Tensor forward_noise(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps) {
  if (x0.shape() != eps.shape()) {
    throw std::invalid_argument("forward_noise: x0 " + shape_str(x0.shape()) + " vs eps " +
                                shape_str(eps.shape()));
  }
  schedule.check_timestep(t);
  const double ab = schedule.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Var diffusion_loss(Tape& tape, NoisePredictor& net, const NoiseSchedule& schedule,
                   const Tensor& x0, int t, const Tensor& eps) {
  const Tensor xt = forward_noise(schedule, x0, t, eps);
  const std::size_t d = xt.numel();
  const int ts[] = {t};
  Var pred = net.forward(tape, tape.constant(xt.reshaped({1, d})), ts);
  return sum_squares(sub(tape.constant(eps.reshaped({1, d})), pred));
}

double diffusion_loss_value(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                            int t, const Tensor& eps) {
  Tape tape;
  return diffusion_loss(tape, net, schedule, x0, t, eps).value().item();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
}

namespace {

Tensor image_at(const Tensor& images, std::size_t i) {
  const Shape img_shape(images.shape().begin() + 1, images.shape().end());
  const std::size_t d = shape_numel(img_shape);
  const auto begin = images.data().begin() + static_cast<std::ptrdiff_t>(i * d);
  Tensor out(img_shape);
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(d), out.data().begin());
  return out;
}

struct NoisedBatch {
  Tensor xt;   // [B, D]
  Tensor eps;  // [B, D]
  std::vector<int> ts;
};

void check_finite_loss(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                             ", batch " + std::to_string(batch));
  }
}

}  // namespace

double dp_sgd_gradient(NoisePredictor& net, const Tensor& xt, const Tensor& eps, std::span<const int> ts,
                       const DpSgdConfig& dp, Rng& rng) {
  dp.validate();
  const auto params = net.parameters();
  const std::size_t bs = ts.size();
  Tape tape;
  tape.enable_per_sample_norms(bs);
  Var pred = net.forward(tape, tape.constant(xt), ts);
  Var per_row = row_sum_squares(sub(tape.constant(eps), pred));
  Var total = sum(per_row);
  tape.backward(total);
  const double loss_sum = total.value().item();

  Tensor weights({bs});
  for (std::size_t r = 0; r < bs; ++r) {
    const double norm = std::sqrt(tape.per_sample_sq_norms()[r]);
    weights[r] = norm > dp.clip_bound ? dp.clip_bound / norm : 1.0;
  }
  for (auto* p : params) p->zero_grad();
  tape.disable_per_sample_norms();
  tape.backward(sum(mul(per_row, tape.constant(std::move(weights)))));

  const double inv_b = 1.0 / static_cast<double>(bs);
  const double noise_std = dp.noise_multiplier * dp.clip_bound;
  for (auto* p : params) {
    for (double& g : p->grad.data()) {
      if (dp.noise_multiplier > 0.0) g += noise_std * rng.normal();
      g *= inv_b;
    }
  }
  return loss_sum;
}

TrainResult train(NoisePredictor& net, const Tensor& images, const NoiseSchedule& schedule,
                  const TrainConfig& config, const DefenseSpec& defense) {
  config.validate();
  if (images.rank() != 4 || images.dim(0) == 0) {
    throw std::invalid_argument("train: expected non-empty [n,C,H,W] images, got " +
                                shape_str(images.shape()));
  }
  const ImageShape ishape = net.input_shape();
  if (Shape(images.shape().begin() + 1, images.shape().end()) != ishape.shape()) {
    throw std::invalid_argument("train: image shape does not match the network input");
  }
  if (defense.kind == DefenseKind::dpsgd) defense.dp.validate();
  if (defense.augments()) defense.augmentation.validate(ishape.height, ishape.width);

  const std::size_t n = images.dim(0);
  const std::size_t d = ishape.numel();
  const auto params = net.parameters();
  Adam adam(params, config.adam);
  Rng rng(config.seed);

  const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;
  std::vector<std::size_t> order(n);
  TrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t bs = std::min(config.batch_size, n - begin);

      NoisedBatch batch{Tensor({bs, d}), Tensor({bs, d}), std::vector<int>(bs)};
      for (std::size_t r = 0; r < bs; ++r) {
        Tensor x0 = image_at(images, order[begin + r]);
        if (defense.augments()) x0 = augment(x0, defense, rng);
        const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(schedule.T)));
        const Tensor eps = gaussian_sample(rng, x0.shape());
        const Tensor xt = forward_noise(schedule, x0, t, eps);
        batch.ts[r] = t;
        std::copy(xt.data().begin(), xt.data().end(), batch.xt.data().begin() + static_cast<std::ptrdiff_t>(r * d));
        std::copy(eps.data().begin(), eps.data().end(), batch.eps.data().begin() + static_cast<std::ptrdiff_t>(r * d));
      }

      for (auto* p : params) p->zero_grad();
      double batch_loss_sum = 0.0;
      if (defense.kind == DefenseKind::dpsgd) {
        batch_loss_sum = dp_sgd_gradient(net, batch.xt, batch.eps, batch.ts, defense.dp, rng);
      } else {
        Tape tape;
        Var pred = net.forward(tape, tape.constant(batch.xt), batch.ts);
        Var per_row = row_sum_squares(sub(tape.constant(batch.eps), pred));
        Var loss = mean(per_row);
        batch_loss_sum = loss.value().item() * static_cast<double>(bs);
        tape.backward(loss);
      }
      check_finite_loss(batch_loss_sum, epoch, b);
      epoch_loss += batch_loss_sum;

      double lr = config.learning_rate;
      if (config.lr_schedule == LrSchedule::cosine) {
        const double progress = static_cast<double>(adam.steps()) / total_steps;
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      }
      adam.step(lr);
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
  }
  for (auto* p : params) p->zero_grad();
  return result;
}

void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,mean_loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) os << (i + 1) << ',' << trace[i] << '\n';
}

Tensor denoise_from(const Predictor& predict, const NoiseSchedule& schedule, Tensor x, Rng& rng) {
  for (int t = schedule.T; t >= 1; --t) {
    const Tensor eps_hat = predict(x, t);
    const double a = schedule.alpha_at(t);
    const double coef = schedule.beta_at(t) / std::sqrt(1.0 - schedule.alpha_bar_at(t));
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double sigma = schedule.sigma_at(t);
    Tensor next(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      next[i] = inv_sqrt_a * (x[i] - coef * eps_hat[i]);
      if (t > 1) next[i] += sigma * rng.normal();
    }
    x = std::move(next);
  }
  return x;
}

std::vector<Tensor> ancestral_sample(DenoiserNet& net, const NoiseSchedule& schedule, Rng& rng,
                                     std::size_t count) {
  if (count < 1) throw std::invalid_argument("ancestral_sample: count must be >= 1");
  const Predictor predict = [&net](const Tensor& x, int t) { return net.forward(x, t); };
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor xT = gaussian_sample(rng, net.input_shape().shape());
    out.push_back(denoise_from(predict, schedule, std::move(xT), rng));
  }
  return out;
}

}  // namespace gsamia
