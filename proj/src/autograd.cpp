#include "ctiunet/autograd.hpp"

#include "ctiunet/errors.hpp"

namespace ctiunet {

Parameter::Parameter(std::string name_in, Tensor4 value_in)
    : name(std::move(name_in)),
      value(std::move(value_in)),
      grad(Tensor4::zeros_like(value)) {}

void Parameter::zero_grad() {
  grad = Tensor4::zeros_like(value);
  has_grad = false;
}

void Parameter::accumulate_grad(const Tensor4& g) {
  if (grad.shape() != value.shape()) grad = Tensor4::zeros_like(value);
  grad.add_inplace(g);
  has_grad = true;
}

Value Tape::constant(Tensor4 t) {
  Node node;
  node.value = std::move(t);
  nodes_.push_back(std::move(node));
  return Value{this, nodes_.size() - 1};
}

Value Tape::parameter(Parameter& p) {
  Node node;
  node.value = p.value;
  node.param = &p;
  node.needs_grad = requires_grad_;
  nodes_.push_back(std::move(node));
  return Value{this, nodes_.size() - 1};
}

Value Tape::record(Tensor4 out, const std::vector<Value>& inputs,
                   BackwardFn fn) {
  Node node;
  node.value = std::move(out);
  if (requires_grad_) {
    for (const Value& v : inputs) {
      if (v.tape != this) throw HarnessError("value recorded on another tape");
      node.inputs.push_back(v.id);
      node.needs_grad = node.needs_grad || nodes_[v.id].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Value{this, nodes_.size() - 1};
}

void Tape::backward(Value target) {
  if (!requires_grad_) throw HarnessError("backward on a no-grad tape");
  Node& root = nodes_.at(target.id);
  if (root.value.size() != 1) {
    throw HarnessError("backward target must be a single element, got " +
                       root.value.shape().str());
  }
  for (Node& n : nodes_) n.grad = Tensor4();
  root.grad = Tensor4(root.value.shape(), 1.0);

  std::vector<Tensor4*> grad_in;
  for (std::size_t i = target.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Node& in = nodes_[node.inputs[k]];
      if (!in.needs_grad) continue;
      if (in.grad.empty()) in.grad = Tensor4::zeros_like(in.value);
      grad_in[k] = &in.grad;
    }
    node.backward(node.grad, grad_in);
  }

  for (Node& node : nodes_) {
    if (node.param == nullptr) continue;
    if (node.grad.empty()) node.grad = Tensor4::zeros_like(node.value);
    node.param->accumulate_grad(node.grad);
  }
}

}  // namespace ctiunet
