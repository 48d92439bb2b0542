#pragma once

#include <cstddef>

#include "mcat/tape.hpp"
#include "mcat/tensor.hpp"

namespace mcat {

/// Target Gram of a unit-norm simplex ETF: alpha on the diagonal, beta_etf
/// elsewhere, i.e. alpha I + beta_etf (11^T - I).
struct EtfTarget {
  std::size_t classes = 0;
  double alpha = 1.0;
  double beta_etf = 0.0;

  Tensor matrix() const;
};

/// alpha = 1, beta_etf = -1/(C-1). ConfigError when C < 2.
EtfTarget etf_target(std::size_t classes);

/// ||W W^T - target||_F^2 over the C rows of W (C x m).
/// ConfigError when m < C - 1.
Var geom_regularizer(Var weight);
double geom_regularizer(const Tensor& weight);

/// Minimum pairwise angle between rows of W, in degrees.
/// DegenerateGeometryError for a zero row or fewer than two rows.
double theta_min(const Tensor& weight);

/// Row cosine-similarity matrix.
Tensor cosine_gram(const Tensor& weight);

/// ||cos-Gram(W) - (I + beta_etf (11^T - I))||_F, invariant to row scale.
double etf_alignment_error(const Tensor& weight);

}  // namespace mcat
