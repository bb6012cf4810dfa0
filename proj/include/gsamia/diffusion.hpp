#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gsamia/defenses.hpp"
#include "gsamia/denoiser.hpp"
#include "gsamia/optim.hpp"
#include "gsamia/rng.hpp"

namespace gsamia {

enum class ScheduleKind { linear, cosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Per-timestep tables for a T-step diffusion. Vectors are indexed by t-1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // sigma_t^2 = beta_t

  double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
  double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t - 1)); }
  double sigma_at(int t) const { return sigma.at(static_cast<std::size_t>(t - 1)); }
  void check_timestep(int t) const;
};

NoiseSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);
/// alpha_bar_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) pi/2); betas are
/// recomputed from consecutive ratios and clipped at max_beta.
NoiseSchedule make_cosine_schedule(int T, double s = 0.008, double max_beta = 0.999);
/// Builds from explicit betas (used by both constructors).
NoiseSchedule schedule_from_betas(ScheduleKind kind, std::vector<double> betas);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_noise(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps);

/// L_t = || eps - eps_theta(x_t, t) ||^2 for one image, recorded on tape.
Var diffusion_loss(Tape& tape, NoisePredictor& net, const NoiseSchedule& schedule,
                   const Tensor& x0, int t, const Tensor& eps);
double diffusion_loss_value(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                            int t, const Tensor& eps);

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int epochs = 1;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  AdamConfig adam;
  LrSchedule lr_schedule = LrSchedule::constant;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean per-sample loss for each epoch
};

/// Writes the DP-SGD update (1/B)(sum_i clip_C(g_i) + N(0, sigma^2 C^2 I)) for
/// the per-sample losses ||eps_i - net(xt_i, t_i)||^2 into the parameter grads
/// (overwriting them) and returns the summed loss. Per-sample norms come from
/// one batched backward pass, the clipped sum from a second weighted pass.
/// Noise is drawn in parameter registry order, matching dp_sgd_step.
double dp_sgd_gradient(NoisePredictor& net, const Tensor& xt, const Tensor& eps, std::span<const int> ts,
                       const DpSgdConfig& dp, Rng& rng);

/// Trains on images [n, C, H, W] with Adam. Each sample in a batch gets its
/// own t ~ U{1..T} and fresh eps. With a dpsgd defense, per-sample gradients
/// are clipped and noised before being handed to Adam; augmentation defenses
/// transform each image before noising.
TrainResult train(NoisePredictor& net, const Tensor& images, const NoiseSchedule& schedule,
                  const TrainConfig& config, const DefenseSpec& defense = {});

void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<double>& trace);

using Predictor = std::function<Tensor(const Tensor& x_t, int t)>;

/// Reverse process from a given x_T:
/// x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sigma_t z,
/// with z = 0 at t = 1.
Tensor denoise_from(const Predictor& predict, const NoiseSchedule& schedule, Tensor x_T, Rng& rng);

std::vector<Tensor> ancestral_sample(DenoiserNet& net, const NoiseSchedule& schedule, Rng& rng,
                                     std::size_t count);

}  // namespace gsamia
