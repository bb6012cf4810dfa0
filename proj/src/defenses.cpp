#include "gsamia/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsamia {

namespace {

void require_image(const char* op, const Tensor& image) {
  if (image.rank() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected [C,H,W], got " +
                                shape_str(image.shape()));
  }
}

}  // namespace

void DpSgdConfig::validate() const {
  if (!(clip_bound > 0.0)) throw std::invalid_argument("dp-sgd clip bound must be positive");
  if (!(noise_multiplier >= 0.0)) throw std::invalid_argument("dp-sgd noise multiplier must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("dp-sgd delta must lie in (0, 1)");
}

void AugmentationPolicy::validate(std::size_t height, std::size_t width) const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(flip_prob) || !prob_ok(cutout_prob)) {
    throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  }
  if (cutout_size > std::min(height, width)) {
    throw std::invalid_argument("cutout size exceeds image side");
  }
}

DefenseKind parse_defense(const std::string& name) {
  if (name == "none") return DefenseKind::none;
  if (name == "dpsgd") return DefenseKind::dpsgd;
  if (name == "flip") return DefenseKind::flip;
  if (name == "cutout") return DefenseKind::cutout;
  if (name == "randaug-lite") return DefenseKind::randaug_lite;
  throw std::invalid_argument("unknown defense '" + name + "'");
}

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::dpsgd: return "dpsgd";
    case DefenseKind::flip: return "flip";
    case DefenseKind::cutout: return "cutout";
    case DefenseKind::randaug_lite: return "randaug-lite";
  }
  return "none";
}

std::vector<double> clip_per_sample_gradient(std::span<const double> grad, double clip_bound) {
  if (!(clip_bound > 0.0)) throw std::invalid_argument("clip bound must be positive");
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  std::vector<double> out(grad.begin(), grad.end());
  if (norm > clip_bound) {
    const double factor = clip_bound / norm;
    for (auto& g : out) g *= factor;
  }
  return out;
}

std::vector<double> dp_sgd_step(std::span<const std::vector<double>> per_sample_grads,
                                const DpSgdConfig& config, Rng& rng) {
  if (per_sample_grads.empty()) throw std::invalid_argument("dp_sgd_step: empty batch");
  const std::size_t dim = per_sample_grads.front().size();
  std::vector<double> total(dim, 0.0);
  for (const auto& g : per_sample_grads) {
    if (g.size() != dim) throw std::invalid_argument("dp_sgd_step: gradient sizes differ");
    const auto clipped = clip_per_sample_gradient(g, config.clip_bound);
    for (std::size_t i = 0; i < dim; ++i) total[i] += clipped[i];
  }
  if (config.noise_multiplier > 0.0) {
    const double std = config.noise_multiplier * config.clip_bound;
    for (auto& v : total) v += std * rng.normal();
  }
  const double b = static_cast<double>(per_sample_grads.size());
  for (auto& v : total) v /= b;
  return total;
}

Tensor horizontal_flip(const Tensor& image) {
  require_image("horizontal_flip", image);
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        out[(c * H + y) * W + x] = image[(c * H + y) * W + (W - 1 - x)];
      }
  return out;
}

Tensor random_horizontal_flip(const Tensor& image, double prob, Rng& rng) {
  require_image("random_horizontal_flip", image);
  if (prob <= 0.0) return image;
  if (rng.uniform() < prob) return horizontal_flip(image);
  return image;
}

Tensor cutout(const Tensor& image, std::size_t size, Rng& rng) {
  require_image("cutout", image);
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (size > std::min(H, W)) throw std::invalid_argument("cutout: size exceeds image side");
  if (size == 0) return image;
  const std::size_t y0 = rng.uniform_int(H - size + 1);
  const std::size_t x0 = rng.uniform_int(W - size + 1);
  Tensor out = image;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = y0; y < y0 + size; ++y)
      for (std::size_t x = x0; x < x0 + size; ++x) out[(c * H + y) * W + x] = 0.0;
  return out;
}

Tensor adjust_brightness(const Tensor& image, double delta) {
  Tensor out = image;
  for (auto& v : out.data()) v = std::clamp(v + delta, -1.0, 1.0);
  return out;
}

Tensor translate(const Tensor& image, int dy, int dx) {
  require_image("translate", image);
  const auto C = static_cast<long>(image.dim(0));
  const auto H = static_cast<long>(image.dim(1));
  const auto W = static_cast<long>(image.dim(2));
  Tensor out(image.shape());
  for (long c = 0; c < C; ++c)
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        const long sy = y - dy, sx = x - dx;
        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
        out[static_cast<std::size_t>((c * H + y) * W + x)] =
            image[static_cast<std::size_t>((c * H + sy) * W + sx)];
      }
  return out;
}

Tensor randaug_lite(const Tensor& image, const AugmentationPolicy& policy, Rng& rng) {
  Tensor out = image;
  for (int k = 0; k < 2; ++k) {
    switch (rng.uniform_int(4)) {
      case 0:
        out = horizontal_flip(out);
        break;
      case 1:
        out = cutout(out, std::min({policy.cutout_size, out.dim(1), out.dim(2)}), rng);
        break;
      case 2:
        out = adjust_brightness(out, policy.brightness * (2.0 * rng.uniform() - 1.0));
        break;
      default: {
        const auto span = static_cast<std::uint64_t>(2 * policy.translate + 1);
        const int dy = static_cast<int>(rng.uniform_int(span)) - static_cast<int>(policy.translate);
        const int dx = static_cast<int>(rng.uniform_int(span)) - static_cast<int>(policy.translate);
        out = translate(out, dy, dx);
        break;
      }
    }
  }
  return out;
}

Tensor augment(const Tensor& image, const DefenseSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DefenseKind::flip:
      return random_horizontal_flip(image, spec.augmentation.flip_prob, rng);
    case DefenseKind::cutout:
      if (rng.uniform() < spec.augmentation.cutout_prob) {
        return cutout(image, spec.augmentation.cutout_size, rng);
      }
      return image;
    case DefenseKind::randaug_lite:
      return randaug_lite(image, spec.augmentation, rng);
    default:
      return image;
  }
}

}  // namespace gsamia
