#include "hidfd/tape.hpp"

#include <algorithm>

#include "hidfd/errors.hpp"

namespace hidfd {

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("value() on unbound Var");
  return tape->value(*this);
}

const Tensor& Var::grad() const {
  if (tape == nullptr) throw ContractError("grad() on unbound Var");
  return tape->grad(*this);
}

Var Tape::constant(Tensor value) { return input(std::move(value), false); }

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.requires_grad = requires_grad;
  value.requires_grad = requires_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Var v = input(p.value, true);
  nodes_.back().op = "param:" + p.name;
  nodes_.back().param = &p;
  return v;
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw ContractError(std::string(what) + ": variable does not belong to this tape");
  }
}

Var Tape::record(std::string op, std::vector<Var> inputs, ForwardFn forward,
                 BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v, n.op.c_str());
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    in.push_back(&nodes_[v.id].value);
  }
  n.value = forward(in);
  n.value.requires_grad = n.requires_grad;
  n.forward = std::move(forward);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  if (!nodes_[loss.id].value.is_scalar()) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(nodes_[loss.id].value.shape()));
  }
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.push_back(Tensor::zeros_like(n.value));
  grads_[loss.id][0] = 1.0;

  std::vector<const Tensor*> in;
  std::vector<Tensor*> gin;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = grads_[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      continue;
    }
    if (!n.backward) continue;
    in.clear();
    gin.clear();
    for (std::size_t j : n.inputs) {
      in.push_back(&nodes_[j].value);
      gin.push_back(nodes_[j].requires_grad ? &grads_[j] : nullptr);
    }
    n.backward(in, n.value, grads_[i], gin);
  }
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id].value;
}

const Tensor& Tape::grad(Var v) const {
  check_owned(v, "grad");
  if (grads_.size() <= v.id) throw ContractError("grad: backward() has not reached this node");
  return grads_[v.id];
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id].requires_grad;
}

const std::string& Tape::op_name(Var v) const {
  check_owned(v, "op_name");
  return nodes_[v.id].op;
}

bool Tape::replay_matches() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  std::vector<const Tensor*> in;
  for (const Node& n : nodes_) {
    if (!n.forward) {
      values.push_back(n.value);
      continue;
    }
    in.clear();
    for (std::size_t j : n.inputs) in.push_back(&values[j]);
    values.push_back(n.forward(in));
    if (values.back().values() != n.value.values()) return false;
  }
  return true;
}

}  // namespace hidfd
