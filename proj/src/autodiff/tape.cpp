#include "contir/autodiff/tape.hpp"

#include <string>

#include "contir/error.hpp"

namespace contir::ad {

const Tensor& Var::value() const {
  if (!tape_) throw StateError("Var: use of an unbound variable");
  return tape_->nodes_[id_].value;
}

bool Var::requires_grad() const {
  if (!tape_) throw StateError("Var: use of an unbound variable");
  return tape_->nodes_[id_].requires_grad;
}

void Tape::check_owned(const Var& v, std::string_view op_name) const {
  if (v.tape_ != this) {
    throw StateError(std::string(op_name) + ": input belongs to a different computation record");
  }
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = parameters_.find(name); it != parameters_.end()) {
    return Var(this, it->second);
  }
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' holds non-finite values");
  nodes_.push_back(Node{value, {}, {}, true});
  parameters_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardRule rule,
                 std::string_view op_name) {
  if (consumed_) throw StateError(std::string(op_name) + ": computation record already consumed");
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name) + ": non-finite output");
  }
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  bool needs_grad = false;
  for (const Var& v : inputs) {
    check_owned(v, op_name);
    node.inputs.push_back(v.id_);
    needs_grad = needs_grad || nodes_[v.id_].requires_grad;
  }
  if (grad_enabled_ && needs_grad) {
    node.requires_grad = true;
    node.rule = std::move(rule);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(const Var& root) {
  check_owned(root, "backward");
  if (consumed_) throw StateError("backward: computation record already consumed");
  const Node& root_node = nodes_[root.id_];
  if (root_node.value.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     shape_string(root_node.value.shape()));
  }
  consumed_ = true;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  if (root_node.requires_grad) {
    grads[root.id_] = Tensor(root_node.value.shape(), 1.0);
  }

  BackwardContext ctx;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads[i] || !node.rule) continue;
    ctx.grad_ = &*grads[i];
    ctx.output_ = &node.value;
    ctx.inputs_.clear();
    ctx.input_grads_.clear();
    for (std::size_t in : node.inputs) {
      ctx.inputs_.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!grads[in]) grads[in] = Tensor::zeros_like(nodes_[in].value);
        ctx.input_grads_.push_back(&*grads[in]);
      } else {
        ctx.input_grads_.push_back(nullptr);
      }
    }
    node.rule(ctx);
    // Interior gradients are no longer needed once propagated.
    grads[i].reset();
  }

  GradientMap out;
  for (const auto& [name, id] : parameters_) {
    if (grads[id]) {
      if (!grads[id]->all_finite()) {
        throw NumericError("backward: non-finite gradient for '" + name + "'");
      }
      out.add(name, std::move(*grads[id]));
    } else {
      out.add(name, Tensor::zeros_like(nodes_[id].value));
    }
  }
  return out;
}

Bindings bind_parameters(Tape& tape, const ParameterSet& params) {
  Bindings b;
  for (const auto& [name, t] : params) b.emplace(name, tape.parameter(name, t));
  return b;
}

}  // namespace contir::ad
