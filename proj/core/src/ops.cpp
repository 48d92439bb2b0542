#include "mcat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcat/error.hpp"

namespace mcat {

namespace kernels {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (out.shape() != Shape{n, m}) out = Tensor::matrix(n, m);
  std::fill(out.data().begin(), out.data().end(), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_bt(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (out.shape() != Shape{n, m}) out = Tensor::matrix(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += pa[i * k + p] * pb[j * k + p];
      po[i * m + j] = acc;
    }
  }
}

void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = pb + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* orow = po + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace kernels

namespace {

void require_finite(Var v, Op op) {
  if (!v.value().all_finite()) throw NumericError(std::string("non-finite input to ") + op_name(op));
}

void require_matrix(Var v, Op op) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op_name(op)) + " needs a matrix, got shape " + to_string(v.value().shape()));
  }
}

void require_same_shape(Var a, Var b, Op op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op_name(op)) + ": shape " + to_string(a.value().shape()) + " vs " +
                         to_string(b.value().shape()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("primitive applied to an unbound Var");
  return *a.tape();
}

void check_output(const Tensor& t, Op op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite output from ") + op_name(op));
}

// Elementwise unary op where the local derivative depends only on the input.
template <typename F, typename D>
Var unary(Var a, Op op, F f, D df) {
  require_finite(a, op);
  Tensor out(a.value().shape());
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return tape_of(a).record(op, std::move(out), {a}, [df](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(t.input_of(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix(a, Op::matmul);
  require_matrix(b, Op::matmul);
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: " + to_string(a.value().shape()) + " x " + to_string(b.value().shape()));
  }
  require_finite(a, Op::matmul);
  require_finite(b, Op::matmul);
  Tensor out;
  kernels::matmul(a.value(), b.value(), out);
  check_output(out, Op::matmul);
  return tape_of(a).record(Op::matmul, std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& va = t.value_of(t.input_of(self, 0));
    const auto& vb = t.value_of(t.input_of(self, 1));
    if (Tensor* ga = t.grad_sink(self, 0)) {
      Tensor tmp;
      kernels::matmul_bt(g, vb, tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) (*ga)[i] += tmp[i];
    }
    if (Tensor* gb = t.grad_sink(self, 1)) kernels::matmul_at_acc(va, g, *gb);
  });
}

Var transpose(Var a) {
  require_matrix(a, Op::transpose);
  require_finite(a, Op::transpose);
  const auto& v = a.value();
  const std::size_t n = v.rows(), m = v.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = v.at(i, j);
  return tape_of(a).record(Op::transpose, std::move(out), {a}, [](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const auto& g = t.grad_of(self);
    const std::size_t n = ga->rows(), m = ga->cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += g.at(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, Op::add);
  require_finite(a, Op::add);
  require_finite(b, Op::add);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  check_output(out, Op::add);
  return tape_of(a).record(Op::add, std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* gi = t.grad_sink(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
      }
    }
  });
}

Var add_row(Var a, Var row) {
  require_matrix(a, Op::add_row);
  require_matrix(row, Op::add_row);
  if (row.value().rows() != 1 || row.value().cols() != a.value().cols()) {
    throw DimensionError("add_row: " + to_string(a.value().shape()) + " + " + to_string(row.value().shape()));
  }
  require_finite(a, Op::add_row);
  require_finite(row, Op::add_row);
  Tensor out = a.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += row.value()[j];
  check_output(out, Op::add_row);
  return tape_of(a).record(Op::add_row, std::move(out), {a, row}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (Tensor* ga = t.grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gr = t.grad_sink(self, 1)) {
      const std::size_t n = g.rows(), m = g.cols();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*gr)[j] += g.at(i, j);
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, Op::sub);
  require_finite(a, Op::sub);
  require_finite(b, Op::sub);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  check_output(out, Op::sub);
  return tape_of(a).record(Op::sub, std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (Tensor* ga = t.grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = t.grad_sink(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var scale(Var a, double factor) {
  require_finite(a, Op::scale);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  check_output(out, Op::scale);
  return tape_of(a).record(Op::scale, std::move(out), {a}, [factor](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const auto& g = t.grad_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
  });
}

Var relu(Var a) {
  return unary(
      a, Op::relu, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sign(Var a) {
  return unary(a, Op::sign, kernels::sign, [](double) { return 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return unary(
      a, Op::clamp, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum_squares(Var a) {
  require_finite(a, Op::sum_squares);
  double acc = 0.0;
  for (double v : a.value().data()) acc += v * v;
  Tensor out = Tensor::scalar(acc);
  check_output(out, Op::sum_squares);
  return tape_of(a).record(Op::sum_squares, std::move(out), {a}, [](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const double g = t.grad_of(self)[0];
    const auto& x = t.value_of(t.input_of(self, 0));
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += 2.0 * x[i] * g;
  });
}

Var row_sum_squares(Var a) {
  require_matrix(a, Op::row_sum_squares);
  require_finite(a, Op::row_sum_squares);
  const auto& v = a.value();
  const std::size_t n = v.rows();
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double x : v.row(i)) acc += x * x;
    out[i] = acc;
  }
  check_output(out, Op::row_sum_squares);
  return tape_of(a).record(Op::row_sum_squares, std::move(out), {a}, [](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(t.input_of(self, 0));
    const std::size_t n = x.rows(), m = x.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga->at(i, j) += 2.0 * x.at(i, j) * g[i];
  });
}

Var sum(Var a) {
  require_finite(a, Op::sum);
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  check_output(out, Op::sum);
  return tape_of(a).record(Op::sum, std::move(out), {a}, [](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const double g = t.grad_of(self)[0];
    for (double& v : ga->data()) v += g;
  });
}

Var mean(Var a) {
  require_finite(a, Op::mean);
  const auto n = static_cast<double>(a.value().size());
  if (a.value().empty()) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  Tensor out = Tensor::scalar(acc / n);
  return tape_of(a).record(Op::mean, std::move(out), {a}, [n](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(self, 0);
    if (!ga) return;
    const double g = t.grad_of(self)[0] / n;
    for (double& v : ga->data()) v += g;
  });
}

Var normalize_rows(Var a) {
  require_matrix(a, Op::normalize_rows);
  require_finite(a, Op::normalize_rows);
  const auto& v = a.value();
  const std::size_t n = v.rows(), m = v.cols();
  Tensor out = v;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double x : v.row(i)) acc += x * x;
    norms[i] = std::sqrt(acc);
    if (norms[i] == 0.0) throw NumericError("normalize_rows: zero row " + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) /= norms[i];
  }
  return tape_of(a).record(Op::normalize_rows, std::move(out), {a},
                           [norms = std::move(norms)](Tape& t, std::size_t self) {
                             Tensor* ga = t.grad_sink(self, 0);
                             if (!ga) return;
                             const auto& g = t.grad_of(self);
                             const auto& y = t.value_of(self);
                             const std::size_t n = y.rows(), m = y.cols();
                             for (std::size_t i = 0; i < n; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < m; ++j) dot += y.at(i, j) * g.at(i, j);
                               for (std::size_t j = 0; j < m; ++j) {
                                 ga->at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / norms[i];
                               }
                             }
                           });
}

std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw DimensionError("cross-entropy: label count does not match logits rows");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DimensionError("cross-entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    out[i] = std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels, Reduction reduction) {
  require_matrix(logits, Op::softmax_cross_entropy);
  require_finite(logits, Op::softmax_cross_entropy);
  const auto& v = logits.value();
  const std::size_t n = v.rows();
  auto per_row = cross_entropy_rows(v, labels);
  double acc = 0.0;
  for (double l : per_row) acc += l;
  const double factor = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor out = Tensor::scalar(acc * factor);
  check_output(out, Op::softmax_cross_entropy);

  // Saved: softmax probabilities with the label subtracted.
  Tensor delta = v;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = delta.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      z += x;
    }
    for (double& x : row) x /= z;
    row[static_cast<std::size_t>(labels[i])] -= 1.0;
  }
  return tape_of(logits).record(Op::softmax_cross_entropy, std::move(out), {logits},
                                [delta = std::move(delta), factor](Tape& t, std::size_t self) {
                                  Tensor* ga = t.grad_sink(self, 0);
                                  if (!ga) return;
                                  const double g = t.grad_of(self)[0] * factor;
                                  for (std::size_t i = 0; i < delta.size(); ++i) (*ga)[i] += delta[i] * g;
                                });
}

}  // namespace mcat
