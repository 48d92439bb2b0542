#include "mcat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mcat/error.hpp"
#include "mcat/ops.hpp"

namespace mcat {

Tensor EtfTarget::matrix() const {
  Tensor t = Tensor::matrix(classes, classes, beta_etf);
  for (std::size_t i = 0; i < classes; ++i) t.at(i, i) = alpha;
  return t;
}

EtfTarget etf_target(std::size_t classes) {
  if (classes < 2) throw ConfigError("an ETF needs at least two classes", "data.C");
  return {classes, 1.0, -1.0 / static_cast<double>(classes - 1)};
}

namespace {

void check_dims(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("classifier weight must be a matrix, got " + to_string(w.shape()));
  if (w.cols() + 1 < w.rows()) {
    throw ConfigError("simplex ETF over " + std::to_string(w.rows()) + " classes needs feature dim >= " +
                          std::to_string(w.rows() - 1) + ", got " + std::to_string(w.cols()),
                      "model.feature_dim");
  }
}

std::vector<double> row_norms(const Tensor& w) {
  std::vector<double> norms(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    for (double v : w.row(i)) acc += v * v;
    norms[i] = std::sqrt(acc);
    if (norms[i] == 0.0) throw DegenerateGeometryError("classifier row " + std::to_string(i) + " is zero");
  }
  return norms;
}

}  // namespace

Var geom_regularizer(Var weight) {
  check_dims(weight.value());
  // Recording new nodes may move the tape's storage; copy what is needed first.
  const std::size_t classes = weight.value().rows();
  Tape& tape = *weight.tape();
  Var gram = matmul(weight, transpose(weight));
  return sum_squares(sub(gram, tape.constant(etf_target(classes).matrix())));
}

double geom_regularizer(const Tensor& w) {
  check_dims(w);
  const Tensor target = etf_target(w.rows()).matrix();
  Tensor gram;
  kernels::matmul_bt(w, w, gram);
  double acc = 0.0;
  for (std::size_t i = 0; i < gram.size(); ++i) {
    const double d = gram[i] - target[i];
    acc += d * d;
  }
  return acc;
}

Tensor cosine_gram(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("classifier weight must be a matrix");
  const auto norms = row_norms(w);
  Tensor gram;
  kernels::matmul_bt(w, w, gram);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.rows(); ++j) {
      gram.at(i, j) = std::clamp(gram.at(i, j) / (norms[i] * norms[j]), -1.0, 1.0);
    }
  }
  return gram;
}

double theta_min(const Tensor& w) {
  if (w.rank() != 2 || w.rows() < 2) throw DegenerateGeometryError("theta_min needs at least two classifier rows");
  const Tensor cos = cosine_gram(w);
  double best = -1.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = i + 1; j < w.rows(); ++j) best = std::max(best, cos.at(i, j));
  }
  return std::acos(best) * 180.0 / std::numbers::pi;
}

double etf_alignment_error(const Tensor& w) {
  if (w.rank() != 2 || w.rows() < 2) throw DegenerateGeometryError("ETF alignment needs at least two classifier rows");
  const Tensor cos = cosine_gram(w);
  const double beta = etf_target(w.rows()).beta_etf;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.rows(); ++j) {
      const double d = cos.at(i, j) - (i == j ? 1.0 : beta);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace mcat
