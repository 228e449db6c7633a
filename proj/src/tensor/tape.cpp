#include <cmath>

#include "mghl/tensor.hpp"

namespace mghl {

Var Tape::push(Node node) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node node;
  node.leaf = true;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  Node node;
  node.leaf = true;
  node.requires_grad = true;
  node.value = value;
  Var v = push(std::move(node));
  params_.emplace(name, v.id);
  return v;
}

Var Tape::apply(Primitive op, std::span<const Var> inputs, const Attrs& attrs) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  Node node;
  node.op = op;
  node.attrs = attrs;
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::invalid_argument(std::string(primitive_name(op)) + ": input from another tape");
    values.push_back(&nodes_.at(v.id).value);
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  node.value = forward_primitive(op, values, attrs);
  return push(std::move(node));
}

GradientMap Tape::backward(Var root) {
  if (consumed_) throw std::logic_error("backward() called twice on the same tape");
  if (root.tape != this) throw std::invalid_argument("backward root belongs to another tape");
  if (value(root).size() != 1) {
    throw ShapeError("backward root must be scalar, got " + shape_str(value(root).shape()));
  }
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[root.id] = Tensor(value(root).shape(), 1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.leaf || !node.requires_grad || grads[i].size() == 0) continue;
    backprop_node(node, grads[i], grads);
  }

  GradientMap out;
  for (const auto& [name, id] : params_) {
    out.emplace(name, grads[id].size() == 0 ? Tensor(nodes_[id].value.shape()) : std::move(grads[id]));
  }
  return out;
}

Var matmul(Var a, Var b) { return a.tape->apply(Primitive::kMatmul, {a, b}); }

Var conv2d(Var x, Var weight, Var bias, std::size_t stride) {
  Attrs attrs;
  attrs.stride = stride;
  return x.tape->apply(Primitive::kConv2d, {x, weight, bias}, attrs);
}

Var add(Var a, Var b) { return a.tape->apply(Primitive::kAdd, {a, b}); }
Var sub(Var a, Var b) { return a.tape->apply(Primitive::kSub, {a, b}); }
Var mul(Var a, Var b) { return a.tape->apply(Primitive::kMul, {a, b}); }

Var scale(Var a, double factor) {
  Attrs attrs;
  attrs.factor = factor;
  return a.tape->apply(Primitive::kScale, {a}, attrs);
}

Var relu(Var a) { return a.tape->apply(Primitive::kRelu, {a}); }
Var sigmoid(Var a) { return a.tape->apply(Primitive::kSigmoid, {a}); }
Var tanh(Var a) { return a.tape->apply(Primitive::kTanh, {a}); }
Var softmax(Var a) { return a.tape->apply(Primitive::kSoftmax, {a}); }
Var log_softmax(Var a) { return a.tape->apply(Primitive::kLogSoftmax, {a}); }
Var log(Var a) { return a.tape->apply(Primitive::kLog, {a}); }
Var sum(Var a) { return a.tape->apply(Primitive::kSum, {a}); }
Var mean(Var a) { return a.tape->apply(Primitive::kMean, {a}); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: needs at least one input");
  return parts.front().tape->apply(Primitive::kConcat, parts);
}

Var one_hot(Tape& tape, std::size_t depth, std::size_t index) {
  Attrs attrs;
  attrs.depth = depth;
  attrs.index = index;
  return tape.apply(Primitive::kOneHot, std::span<const Var>{}, attrs);
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Attrs attrs;
  attrs.offset = offset;
  attrs.length = length;
  return a.tape->apply(Primitive::kSlice, {a}, attrs);
}

Var reshape(Var a, Shape shape) {
  Attrs attrs;
  attrs.shape = std::move(shape);
  return a.tape->apply(Primitive::kReshape, {a}, attrs);
}

double gradient_check(const TensorFunction& f, const Tensor& point, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("gradient_check: eps must be positive");

  Tensor analytic;
  {
    Tape tape;
    Var x = tape.parameter("x", point);
    Var root = f(tape, x);
    analytic = tape.backward(root).at("x");
  }

  auto evaluate = [&](const Tensor& at) {
    Tape tape;
    Var x = tape.constant(at);
    const double v = f(tape, x).value().item();
    if (!std::isfinite(v)) throw std::domain_error("gradient_check: non-finite value under perturbation");
    return v;
  };

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double up = evaluate(probe);
    probe[i] = point[i] - eps;
    const double down = evaluate(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace mghl
