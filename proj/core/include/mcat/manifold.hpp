#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mcat/nets.hpp"

namespace mcat {

/// Inner latent search used to approximate min_z ||u - G_y(z)||^2.
struct LatentSearch {
  std::size_t steps = 5;  // T_z
  double lr = 0.1;        // lr_z
};

/// Per-sample warm starts for latent descent, keyed by dataset sample index.
///
/// A missing entry falls back to a Gaussian draw seeded by (seed, key), so the
/// starting point never depends on evaluation order. Lookups and stores lock
/// an internal mutex; callers working on distinct keys may share one cache
/// across threads.
class LatentCache {
 public:
  LatentCache(std::size_t latent_dim, std::uint64_t seed) : latent_dim_(latent_dim), seed_(seed) {}

  LatentCache(const LatentCache& other);
  LatentCache& operator=(const LatentCache&) = delete;

  std::vector<double> warm_start(std::size_t key) const;
  std::optional<std::vector<double>> lookup(std::size_t key) const;
  void store(std::size_t key, std::span<const double> z);

  std::size_t size() const;
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t latent_dim_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::unordered_map<std::size_t, std::vector<double>> entries_;
};

/// Seeded standard-normal latent for `key`.
std::vector<double> seeded_latent(std::size_t latent_dim, std::uint64_t seed, std::size_t key);

struct ManifoldDistanceResult {
  double distance = 0.0;       // ||u - G(z_star)||^2
  std::vector<double> z_star;
  std::size_t steps_used = 0;  // accepted descent steps
};

/// Latent descent result for a batch against one generator.
struct LatentDescent {
  std::vector<double> distance;
  Tensor z_star;   // n x d_z
  Tensor anchors;  // n x d_f, G(z_star)
  std::vector<std::size_t> steps_used;
};

/// T_z gradient steps on each row's latent with per-row step rejection: a step
/// that would increase the distance is discarded and that row's step size is
/// halved, so the returned distance never exceeds the starting one. Rows are
/// processed independently; the result for a row does not depend on the rest
/// of the batch.
LatentDescent latent_descent(const Generator& g, const Tensor& u, Tensor z0, const LatentSearch& search);

/// d_{M_y}(u) for one feature vector. Warm-started from `cache[key]`, which is
/// updated with z_star afterwards. ContractError unless `g` is frozen.
ManifoldDistanceResult manifold_distance(std::span<const double> u, const Generator& g, const LatentSearch& search,
                                         LatentCache& cache, std::size_t key);

/// Batched d_{M_y} for rows of `u` with labels and cache keys. Groups rows by
/// class; each row's result equals the single-sample call.
struct BatchDistance {
  std::vector<double> distance;
  Tensor anchors;  // G_y(z_star) per row
};

BatchDistance manifold_distance_batch(const Tensor& u, std::span<const int> labels, std::span<const std::size_t> keys,
                                      std::span<const Generator> generators, const LatentSearch& search,
                                      LatentCache& cache, bool update_cache = true);

/// Envelope gradient 2 (u - G(z_star)), holding z_star fixed at the result of
/// the latent search.
std::vector<double> manifold_distance_grad(std::span<const double> u, const Generator& g, const LatentSearch& search,
                                           LatentCache& cache, std::size_t key);

struct PretrainOptions {
  std::size_t latent_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t steps = 400;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  std::vector<Generator> generators;  // frozen, indexed by class
  std::vector<double> initial_loss;
  std::vector<double> final_loss;
};

/// Fits each G_y to minimise E_{x~D_y, z~N(0,I)} ||G_y(z) - phi(x)||^2 by
/// minibatch gradient descent with fresh z every step. Losses are measured on
/// a fixed seeded evaluation draw. DataError when a class has no features.
PretrainResult pretrain_generators(const std::vector<Tensor>& features_by_class, const PretrainOptions& options);

/// Mean ||phi(x) - G(z_star)||_2 over the rows of `features`, using `keys` as
/// cache keys. DataError for an empty batch.
double reconstruction_error(const Generator& g, const Tensor& features, const LatentSearch& search,
                            LatentCache& cache, std::span<const std::size_t> keys);
/// Same with a fresh cache seeded by `seed` and keys 0..n-1.
double reconstruction_error(const Generator& g, const Tensor& features, const LatentSearch& search,
                            std::uint64_t seed);

}  // namespace mcat
