#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsamia/rng.hpp"
#include "gsamia/tensor.hpp"

namespace gsamia {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;

  std::size_t numel() const { return channels * height * width; }
  Shape shape() const { return {channels, height, width}; }
  bool operator==(const ImageShape&) const = default;
};

/// Sinusoidal timestep embedding. dim/2 angular frequencies
/// w_i = 10000^(-i/(dim/2-1)) are geometrically spaced from 1 down to 1e-4;
/// the output is [sin(t w_0), ..., sin(t w_k), cos(t w_0), ..., cos(t w_k)].
class TimeEmbedding {
 public:
  TimeEmbedding(std::size_t dim, int max_t);

  std::size_t dim() const { return dim_; }
  int max_t() const { return max_t_; }
  std::vector<double> operator()(int t) const;
  /// One row per timestep.
  Tensor batch(std::span<const int> ts) const;

 private:
  std::size_t dim_;
  int max_t_;
  std::vector<double> freqs_;
};

/// Anything that maps a batch of noisy images and timesteps to predicted
/// noise on a tape, with an ordered list of parameter layers.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  /// x is [B, C*H*W], one timestep per row; returns [B, C*H*W].
  virtual Var forward(Tape& tape, Var x, std::span<const int> ts) = 0;
  /// Parameter groups W_1..W_N in registry order.
  virtual std::vector<Parameter*> parameters() = 0;
  virtual ImageShape input_shape() const = 0;
};

struct DenoiserConfig {
  ImageShape input_shape;
  std::vector<std::size_t> hidden_widths{256, 256};
  std::size_t embed_dim = 32;
  int max_t = 100;
};

/// Dense noise predictor eps_theta(x_t, t).
///
/// Layer 0 maps [flattened x_t | embedding(t)] to the first hidden width, so
/// its weight holds both the pixel projection and the learned projection of
/// the time embedding. SiLU follows every layer except the last, which maps
/// back to the pixel count. The registry is fc0.weight, fc0.bias, fc1.weight,
/// ... in depth order from the input side.
class DenoiserNet : public NoisePredictor {
 public:
  static DenoiserNet init(const DenoiserConfig& config, Rng& rng);

  const DenoiserConfig& config() const { return config_; }
  const TimeEmbedding& embedding() const { return embed_; }

  /// Batched forward: x is [B, C*H*W], one timestep per row.
  Var forward(Tape& tape, Var x, std::span<const int> ts) override;
  /// Single image [C,H,W] -> predicted noise [C,H,W]; no gradient recorded.
  Tensor forward(const Tensor& x_t, int t);

  std::vector<std::pair<std::string, Parameter*>> named_parameters();
  std::vector<Parameter*> parameters() override;
  ImageShape input_shape() const override { return config_.input_shape; }
  std::span<const Parameter> registry() const { return params_; }
  std::size_t num_layers() const { return params_.size(); }
  std::size_t num_weights() const;
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  static DenoiserNet load(const std::filesystem::path& path, int max_t);

  void check_timestep(int t) const;

 private:
  DenoiserNet(DenoiserConfig config);

  DenoiserConfig config_;
  TimeEmbedding embed_;
  std::vector<Parameter> params_;
};

}  // namespace gsamia
