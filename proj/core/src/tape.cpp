#include "mcat/tape.hpp"

#include "mcat/error.hpp"

namespace mcat {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::sub: return "sub";
    case Op::scale: return "scale";
    case Op::relu: return "relu";
    case Op::sign: return "sign";
    case Op::clamp: return "clamp";
    case Op::sum_squares: return "sum_squares";
    case Op::row_sum_squares: return "row_sum_squares";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
    case Op::normalize_rows: return "normalize_rows";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an unbound Var");
  return tape_->nodes_[id_].value;
}

const Tensor& Var::grad() const {
  if (!tape_) throw ContractError("grad() on an unbound Var");
  const auto& node = tape_->nodes_[id_];
  if (!node.has_grad) throw ContractError("no gradient recorded for this value");
  return node.grad;
}

bool Var::has_grad() const { return tape_ && tape_->nodes_[id_].has_grad; }

bool Var::requires_grad() const { return tape_ && tape_->nodes_[id_].requires_grad; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Op Tape::op(Var v) const { return nodes_.at(v.id()).op; }

Var Tape::record(Op op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string("input of ") + op_name(op) + " belongs to another tape");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_sink(std::size_t node, std::size_t k) {
  Node& in = nodes_[nodes_[node].inputs[k]];
  if (!in.requires_grad) return nullptr;
  if (!in.has_grad) {
    in.grad = Tensor(in.value.shape(), 0.0);
    in.has_grad = true;
  }
  return &in.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward on a value from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.value().shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;

  // Reverse insertion order visits each node once, after all its consumers.
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, i);
  }
}

}  // namespace mcat
