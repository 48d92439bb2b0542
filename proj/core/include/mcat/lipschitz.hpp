#pragma once

#include <cstdint>
#include <string>

#include "mcat/nets.hpp"

namespace mcat {

struct LipschitzBound {
  double upper = 0.0;
  double empirical_lower = 0.0;
  std::string method;
};

/// Largest singular value by power iteration on W^T W, stopped when the
/// relative change of the estimate drops below `tol`.
double spectral_norm(const Tensor& w, double tol = 1e-12, std::size_t max_iter = 200000);

/// sqrt(d) * prod_l sigma_max(W_l): an l-inf -> l2 Lipschitz bound of the
/// extractor's network before the optional output normalisation. ReLU layers
/// are 1-Lipschitz and biases do not enter.
double lipschitz_upper(const FeatureExtractor& fe);

/// max over trials and rows of ||h(x + delta) - h(x)||_2 / epsilon with delta
/// uniform in the epsilon box, h the network before normalisation. 0 when
/// trials == 0.
double lipschitz_empirical(const FeatureExtractor& fe, const Tensor& x, double epsilon, std::size_t trials,
                           std::uint64_t seed);

LipschitzBound lipschitz_bound(const FeatureExtractor& fe, const Tensor& x, double epsilon, std::size_t trials,
                               std::uint64_t seed);

}  // namespace mcat
