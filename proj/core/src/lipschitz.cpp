#include "mcat/lipschitz.hpp"

#include <algorithm>
#include <cmath>

#include "mcat/error.hpp"
#include "mcat/rng.hpp"

namespace mcat {

double spectral_norm(const Tensor& w, double tol, std::size_t max_iter) {
  if (w.rank() != 2 || w.size() == 0) throw DimensionError("spectral norm of a non-matrix");
  const std::size_t r = w.rows(), c = w.cols();
  std::vector<double> v(c), av(r), atav(c);
  Rng rng(0x5EC7ULL);
  for (double& x : v) x = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
  double sigma2 = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    double next = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += w.at(i, j) * v[j];
      av[i] = acc;
      next += acc * acc;
    }
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < r; ++i) acc += w.at(i, j) * av[i];
      atav[j] = acc;
    }
    const bool done = it > 0 && std::abs(next - sigma2) <= tol * next;
    sigma2 = next;
    if (done) break;
    v.swap(atav);
  }
  return std::sqrt(sigma2);
}

double lipschitz_upper(const FeatureExtractor& fe) {
  const auto& layers = fe.net.layers();
  if (layers.empty()) throw UnsupportedError("feature extractor has no layers");
  double prod = std::sqrt(static_cast<double>(fe.input_dim()));
  // Layers store x * W, so the operator norm is that of W (in x out).
  for (const auto& layer : layers) prod *= spectral_norm(layer.weight);
  return prod;
}

double lipschitz_empirical(const FeatureExtractor& fe, const Tensor& x, double epsilon, std::size_t trials,
                           std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw ContractError("empirical Lipschitz estimate needs epsilon > 0");
  if (trials == 0 || x.rank() != 2 || x.rows() == 0) return 0.0;
  const Tensor base = pre_features(fe, x);
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed({seed, t}));
    Tensor xp = x;
    for (double& v : xp.data()) v += rng.uniform(-epsilon, epsilon);
    const Tensor moved = pre_features(fe, xp);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < base.cols(); ++j) {
        const double d = moved.at(i, j) - base.at(i, j);
        acc += d * d;
      }
      best = std::max(best, std::sqrt(acc) / epsilon);
    }
  }
  return best;
}

LipschitzBound lipschitz_bound(const FeatureExtractor& fe, const Tensor& x, double epsilon, std::size_t trials,
                               std::uint64_t seed) {
  return {lipschitz_upper(fe), lipschitz_empirical(fe, x, epsilon, trials, seed),
          "sqrt(d) * spectral-norm product (power iteration); empirical box sampling"};
}

}  // namespace mcat
