#pragma once

#include <span>

#include "mcat/tape.hpp"

namespace mcat {

// Differentiable primitives. Every primitive rejects non-finite inputs with
// NumericError and non-conforming shapes with DimensionError. Subgradient
// conventions: relu'(0) = 0, sign(0) = 0, sign' = 0.

/// (n x k) * (k x m)
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// Adds the 1 x k `row` to every row of the n x k `a`.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sign(Var a);
Var clamp(Var a, double lo, double hi);
/// Squared Frobenius / l2 norm, as a scalar.
Var sum_squares(Var a);
/// n x 1 column of per-row squared l2 norms.
Var row_sum_squares(Var a);
Var sum(Var a);
Var mean(Var a);
/// Each row divided by its l2 norm. A zero row is a NumericError.
Var normalize_rows(Var a);

enum class Reduction { mean, sum };

/// Softmax cross-entropy of n x C logits against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels, Reduction reduction = Reduction::mean);

/// Per-row cross-entropy values without recording anything.
std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const int> labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

// Plain (untaped) kernels shared with code that does not need gradients.
namespace kernels {

/// out = a * b, out resized to (n x m).
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
/// out = a * b^T
void matmul_bt(const Tensor& a, const Tensor& b, Tensor& out);
/// out += a^T * b
void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& out);

double sign(double x) noexcept;

}  // namespace kernels

}  // namespace mcat
