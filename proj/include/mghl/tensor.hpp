#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mghl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Primitive {
  kMatmul,
  kConv2d,
  kAdd,
  kSub,
  kMul,
  kScale,
  kRelu,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLogSoftmax,
  kLog,
  kSum,
  kMean,
  kConcat,
  kOneHot,
  kSlice,
  kReshape,
};

std::string_view primitive_name(Primitive op);

/// Static attributes. Each primitive reads only the fields it needs.
struct Attrs {
  std::size_t stride = 1;   // conv2d
  double factor = 1.0;      // scale
  std::size_t offset = 0;   // slice
  std::size_t length = 0;   // slice
  std::size_t depth = 0;    // one_hot
  std::size_t index = 0;    // one_hot
  Shape shape;              // reshape
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

using GradientMap = std::map<std::string, Tensor>;

/// Append-only record of primitive applications. Single-use: backward()
/// consumes the tape and a second call throws.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a named leaf whose gradient is reported by backward().
  /// Registering an already known name returns the existing node.
  Var parameter(const std::string& name, const Tensor& value);
  bool has_parameter(const std::string& name) const { return params_.contains(name); }

  Var apply(Primitive op, std::span<const Var> inputs, const Attrs& attrs = {});
  Var apply(Primitive op, std::initializer_list<Var> inputs, const Attrs& attrs = {}) {
    return apply(op, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  GradientMap backward(Var root);

 private:
  struct Node {
    Primitive op{};
    bool leaf = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Attrs attrs;
    Tensor value;
  };

  Var push(Node node);
  void backprop_node(const Node& node, const Tensor& grad, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool consumed_ = false;
};

Tensor forward_primitive(Primitive op, std::span<const Tensor* const> inputs, const Attrs& attrs);

// Free-function spellings used by the networks and losses.
Var matmul(Var a, Var b);
Var conv2d(Var x, Var weight, Var bias, std::size_t stride);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
Var concat(std::span<const Var> parts);
Var one_hot(Tape& tape, std::size_t depth, std::size_t index);
Var slice(Var a, std::size_t offset, std::size_t length);
Var reshape(Var a, Shape shape);

/// Scalar-valued function of one tensor argument, built on the given tape.
using TensorFunction = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|) using
/// central differences.
double gradient_check(const TensorFunction& f, const Tensor& point, double eps = 1e-5);

}  // namespace mghl
