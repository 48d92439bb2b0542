#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mcat/data.hpp"
#include "mcat/nets.hpp"
#include "mcat/ops.hpp"
#include "mcat/rng.hpp"
#include "mcat/tape.hpp"

namespace mcat::test {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor normal_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

// Largest |analytic - central| / max(1, |central|) over every coordinate of
// `x`, for the scalar function built by `f` on a fresh tape.
inline double fd_max_error(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5) {
  Tape tape;
  Var xv = tape.leaf(x, true);
  tape.backward(f(tape, xv));
  const Tensor analytic = xv.grad();
  auto eval = [&](const Tensor& at) {
    Tape t;
    return f(t, t.leaf(at, false)).value().item();
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe);
    probe[i] = x[i] - h;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

// sum(out * R) for a fixed random R, turning any matrix output into a scalar
// with non-uniform weights.
inline Var random_functional(Tape& tape, Var out, std::uint64_t seed) {
  const Tensor& v = out.value();
  Tensor r = normal_tensor(v.cols(), 1, seed);
  return sum(matmul(out, tape.constant(r)));
}

inline std::vector<std::size_t> iota_ids(std::size_t n, std::size_t start = 0) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = start + i;
  return ids;
}

inline ModelBundle small_model(std::size_t d, std::size_t classes, std::uint64_t seed, bool normalized = false,
                               std::size_t feature_dim = 8) {
  ModelShape s;
  s.input_dim = d;
  s.hidden = {12};
  s.feature_dim = feature_dim;
  s.num_classes = classes;
  s.normalize_output = normalized;
  s.normalize_rows = normalized;
  return make_model(s, seed);
}

inline void attach_generators(ModelBundle& m, std::size_t latent_dim, std::uint64_t seed) {
  m.generators.clear();
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    m.generators.emplace_back(static_cast<int>(c), std::vector<std::size_t>{latent_dim, 10, m.feature_dim()},
                              mix_seed({seed, c}));
    m.generators.back().freeze();
  }
}

}  // namespace mcat::test
