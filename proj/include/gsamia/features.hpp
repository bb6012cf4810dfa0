#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gsamia/denoiser.hpp"
#include "gsamia/diffusion.hpp"
#include "gsamia/rng.hpp"

namespace gsamia {

enum class SamplerMethod { equidistant, poisson, effective };

SamplerMethod parse_sampler(const std::string& name);
std::string to_string(SamplerMethod method);

/// Sorted, distinct timesteps in [1, T].
struct TimestepSet {
  std::vector<int> steps;
  SamplerMethod method = SamplerMethod::equidistant;

  std::size_t size() const { return steps.size(); }
};

/// {1 + i * floor(T/k) : i = 0..k-1}.
TimestepSet equidistant_sample(int T, int k);

/// Accumulates Exponential(k/T) gaps from 0, rounds each position up, wraps
/// into [1, T] and skips repeats until k distinct steps are collected. The raw
/// gaps are appended to `gaps` when given.
TimestepSet poisson_sample(int T, int k, Rng& rng, std::vector<double>* gaps = nullptr);

/// k contiguous steps centred on t_star (starting at t_star - k/2), shifted
/// to stay inside [1, T].
TimestepSet effective_window(int t_star, int T, int k);

/// Evaluates score_at(t) for t = 1, 1+stride, ... <= T and returns the
/// window around the best-scoring step (earliest step wins ties).
TimestepSet effective_sample(const std::function<double(int)>& score_at, int T, int k,
                             int stride = 20, int* best_step = nullptr);

struct FeatureOptions {
  std::uint64_t root_seed = 0;
  int repeats = 1;      // noise draws per (sample, t)
  bool squared = true;  // squared l2 norm per layer; false gives the plain norm
};

/// Noise paired with (sample_id, t, repeat). Every extractor draws eps_t from
/// here, so GSA1, GSA2 and LSA see the same noise for the same sample.
Tensor feature_noise(std::uint64_t root_seed, std::uint64_t sample_id, int t, int repeat,
                     const Shape& shape);

/// Per-layer gradient norms of the loss averaged over K (one backward pass).
std::vector<double> gsa1(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                         std::uint64_t sample_id, const TimestepSet& K, const FeatureOptions& opt);

/// Mean over K of the per-timestep per-layer gradient norms (|K| backward passes).
std::vector<double> gsa2(NoisePredictor& net, const NoiseSchedule& schedule, const Tensor& x0,
                         std::uint64_t sample_id, const TimestepSet& K, const FeatureOptions& opt);

/// L_t for each t in K, no backward pass.
std::vector<double> lsa_features(NoisePredictor& net, const NoiseSchedule& schedule,
                                 const Tensor& x0, std::uint64_t sample_id, const TimestepSet& K,
                                 const FeatureOptions& opt);

enum class FeatureKind { gsa1, gsa2, lsa };

FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind kind);

struct FeatureVector {
  std::vector<double> values;
  std::uint64_t sample_id = 0;
  int label = -1;  // 1 member, 0 nonmember, -1 unlabeled
};

using FeatureRows = std::vector<FeatureVector>;

/// Extracts one feature row per image of images [n,C,H,W]. Work fans out to
/// `workers` threads, each with its own copy of the net; rows come back in
/// input order and do not depend on the worker count.
FeatureRows extract_features(const DenoiserNet& net, const NoiseSchedule& schedule,
                             const Tensor& images, const std::vector<std::uint64_t>& ids,
                             const std::vector<int>& labels, const TimestepSet& K,
                             FeatureKind kind, const FeatureOptions& opt, std::size_t workers);

/// ceil(fraction * n) with a small guard against representation error.
std::size_t layer_count_for_fraction(std::size_t n, double fraction);

/// Keeps the first ceil(fraction * N) coordinates of every row.
FeatureRows select_layers(const FeatureRows& rows, double top_fraction);

void write_feature_csv(const std::filesystem::path& path, const FeatureRows& rows);
FeatureRows read_feature_csv(const std::filesystem::path& path);

}  // namespace gsamia
