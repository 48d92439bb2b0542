#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "mcat/tensor.hpp"

namespace mcat {

class Tape;

enum class Op {
  leaf,
  matmul,
  transpose,
  add,
  add_row,
  sub,
  scale,
  relu,
  sign,
  clamp,
  sum_squares,
  row_sum_squares,
  sum,
  mean,
  softmax_cross_entropy,
  normalize_rows,
};

const char* op_name(Op op) noexcept;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient after Tape::backward. Throws ContractError if none was computed.
  const Tensor& grad() const;
  bool has_grad() const;
  bool requires_grad() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended as primitives run, so every input is recorded before the
/// output that consumes it and the reverse of insertion order is a valid
/// topological order. A tape is built fresh for each forward pass and is not
/// thread-safe; distinct tapes may be used from distinct threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Fills the gradient of every node that `loss` depends on and that requires
  /// grad. Gradients from an earlier call are discarded first.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const;

  /// Used by primitive implementations. The backward function is dropped when
  /// no input requires grad.
  Var record(Op op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value_of(std::size_t node) const { return nodes_[node].value; }
  const Tensor& grad_of(std::size_t node) const { return nodes_[node].grad; }
  bool requires_grad_of(std::size_t node) const { return nodes_[node].requires_grad; }
  std::size_t input_of(std::size_t node, std::size_t k) const { return nodes_[node].inputs[k]; }

  /// Gradient accumulator for input `k` of `node`, zero-initialised on first
  /// use; nullptr when that input does not require grad.
  Tensor* grad_sink(std::size_t node, std::size_t k);

 private:
  friend class Var;

  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

}  // namespace mcat
