#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gsamia/rng.hpp"
#include "gsamia/tensor.hpp"

namespace gsamia {

struct DpSgdConfig {
  double clip_bound = 1.0;        // C; +inf disables clipping
  double noise_multiplier = 1.0;  // sigma
  double delta = 1e-5;            // reported only, no accountant

  void validate() const;
};

/// Training-time image augmentation. `lite` selects the RandAugment-lite
/// policy: two ops per image drawn uniformly (with replacement) from
/// {flip, cutout, brightness, translate}.
struct AugmentationPolicy {
  double flip_prob = 0.0;
  double cutout_prob = 0.0;
  std::size_t cutout_size = 2;
  bool lite = false;
  double brightness = 0.2;    // lite: uniform shift in [-b, b], result clamped to [-1, 1]
  std::size_t translate = 2;  // lite: uniform shift in [-t, t] pixels per axis, zero fill

  void validate(std::size_t height, std::size_t width) const;
};

enum class DefenseKind { none, dpsgd, flip, cutout, randaug_lite };

DefenseKind parse_defense(const std::string& name);
std::string to_string(DefenseKind kind);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  DpSgdConfig dp;
  AugmentationPolicy augmentation;

  bool augments() const {
    return kind == DefenseKind::flip || kind == DefenseKind::cutout ||
           kind == DefenseKind::randaug_lite;
  }
};

/// grad * min(1, C / ||grad||_2).
std::vector<double> clip_per_sample_gradient(std::span<const double> grad, double clip_bound);

/// (1/B) * (sum of clipped per-sample gradients + N(0, sigma^2 C^2 I)).
/// With sigma == 0 no noise is drawn.
std::vector<double> dp_sgd_step(std::span<const std::vector<double>> per_sample_grads,
                                const DpSgdConfig& config, Rng& rng);

// Images are [C,H,W] tensors.
Tensor horizontal_flip(const Tensor& image);
Tensor random_horizontal_flip(const Tensor& image, double prob, Rng& rng);
/// Zeroes one size x size square whose top-left corner is uniform over the
/// positions that keep it inside the image.
Tensor cutout(const Tensor& image, std::size_t size, Rng& rng);
Tensor adjust_brightness(const Tensor& image, double delta);
Tensor translate(const Tensor& image, int dy, int dx);
Tensor randaug_lite(const Tensor& image, const AugmentationPolicy& policy, Rng& rng);

/// Applies the augmentation configured by spec (identity for none/dpsgd).
Tensor augment(const Tensor& image, const DefenseSpec& spec, Rng& rng);

}  // namespace gsamia
