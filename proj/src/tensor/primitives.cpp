#include <algorithm>
#include <Eigen/Core>
#include <cmath>

#include "mghl/tensor.hpp"

namespace mghl {

std::string_view primitive_name(Primitive op) {
  switch (op) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kConv2d: return "conv2d";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kMul: return "mul";
    case Primitive::kScale: return "scale";
    case Primitive::kRelu: return "relu";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kTanh: return "tanh";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kLogSoftmax: return "log_softmax";
    case Primitive::kLog: return "log";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kConcat: return "concat";
    case Primitive::kOneHot: return "one_hot";
    case Primitive::kSlice: return "slice";
    case Primitive::kReshape: return "reshape";
  }
  throw std::invalid_argument("unknown primitive id " + std::to_string(static_cast<int>(op)));
}

namespace {

[[noreturn]] void shape_fail(Primitive op, const std::string& what) {
  throw ShapeError(std::string(primitive_name(op)) + ": " + what);
}

void expect_arity(Primitive op, std::span<const Tensor* const> in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    shape_fail(op, "expected " + std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                       " inputs, got " + std::to_string(in.size()));
  }
}

void expect_same(Primitive op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, "shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

void expect_vector(Primitive op, const Tensor& a) {
  if (a.rank() != 1) shape_fail(op, "expected a vector, got " + shape_str(a.shape()));
}

struct ConvDims {
  std::size_t channels, height, width, filters, kernel, stride, out_h, out_w;
};

ConvDims conv_dims(std::span<const Tensor* const> in, std::size_t stride) {
  const auto op = Primitive::kConv2d;
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  if (x.rank() != 3) shape_fail(op, "input must be CxHxW, got " + shape_str(x.shape()));
  if (w.rank() != 4) shape_fail(op, "weight must be FxCxKxK, got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0)) {
    shape_fail(op, "weight channels " + std::to_string(w.dim(1)) + " != input channels " + std::to_string(x.dim(0)));
  }
  if (w.dim(2) != w.dim(3)) shape_fail(op, "kernel must be square, got " + shape_str(w.shape()));
  if (stride == 0) shape_fail(op, "stride must be positive");
  const std::size_t k = w.dim(2);
  if (k > x.dim(1) || k > x.dim(2)) {
    shape_fail(op, "kernel " + std::to_string(k) + " larger than input " + shape_str(x.shape()));
  }
  if (in.size() == 3 && in[2]->shape() != Shape{w.dim(0)}) {
    shape_fail(op, "bias shape " + shape_str(in[2]->shape()) + " != (" + std::to_string(w.dim(0)) + ")");
  }
  return {x.dim(0), x.dim(1), x.dim(2), w.dim(0), k, stride, (x.dim(1) - k) / stride + 1, (x.dim(2) - k) / stride + 1};
}

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

ConstMap map_in(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap map_out(Tensor& t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Rows index (channel, ky, kx); columns index output positions.
Matrix im2col(std::span<const double> x, const ConvDims& d) {
  Matrix cols(static_cast<Eigen::Index>(d.channels * d.kernel * d.kernel), static_cast<Eigen::Index>(d.out_h * d.out_w));
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t ky = 0; ky < d.kernel; ++ky) {
      for (std::size_t kx = 0; kx < d.kernel; ++kx) {
        double* row = cols.data() + ((c * d.kernel + ky) * d.kernel + kx) * d.out_h * d.out_w;
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const double* xrow = x.data() + (c * d.height + oy * d.stride + ky) * d.width + kx;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) *row++ = xrow[ox * d.stride];
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& cols, std::span<double> dx, const ConvDims& d) {
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t ky = 0; ky < d.kernel; ++ky) {
      for (std::size_t kx = 0; kx < d.kernel; ++kx) {
        const double* row = cols.data() + ((c * d.kernel + ky) * d.kernel + kx) * d.out_h * d.out_w;
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          double* xrow = dx.data() + (c * d.height + oy * d.stride + ky) * d.width + kx;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) xrow[ox * d.stride] += *row++;
        }
      }
    }
  }
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

Tensor forward_primitive(Primitive op, std::span<const Tensor* const> in, const Attrs& attrs) {
  switch (op) {
    case Primitive::kMatmul: {
      expect_arity(op, in, 2, 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2) shape_fail(op, "left operand must be a matrix, got " + shape_str(a.shape()));
      if (b.rank() < 1 || b.rank() > 2 || b.dim(0) != a.dim(1)) {
        shape_fail(op, "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
      }
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.rank() == 2 ? b.dim(1) : 1;
      Tensor out(b.rank() == 2 ? Shape{m, n} : Shape{m});
      map_out(out, m, n).noalias() = map_in(a, m, k) * map_in(b, k, n);
      return out;
    }
    case Primitive::kConv2d: {
      expect_arity(op, in, 2, 3);
      const auto d = conv_dims(in, attrs.stride);
      Tensor out({d.filters, d.out_h, d.out_w});
      const Matrix cols = im2col(in[0]->data(), d);
      auto o = map_out(out, d.filters, d.out_h * d.out_w);
      o.noalias() = map_in(*in[1], d.filters, d.channels * d.kernel * d.kernel) * cols;
      if (in.size() == 3) o.colwise() += map_in(*in[2], d.filters, 1).col(0);
      return out;
    }
    case Primitive::kAdd:
    case Primitive::kSub:
    case Primitive::kMul: {
      expect_arity(op, in, 2, 2);
      expect_same(op, *in[0], *in[1]);
      Tensor out = *in[0];
      auto o = out.data();
      auto b = in[1]->data();
      if (op == Primitive::kAdd) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
      } else if (op == Primitive::kSub) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= b[i];
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] *= b[i];
      }
      return out;
    }
    case Primitive::kScale:
    case Primitive::kRelu:
    case Primitive::kSigmoid:
    case Primitive::kTanh:
    case Primitive::kLog: {
      expect_arity(op, in, 1, 1);
      Tensor out = *in[0];
      for (double& v : out.data()) {
        switch (op) {
          case Primitive::kScale: v *= attrs.factor; break;
          case Primitive::kRelu: v = v > 0.0 ? v : 0.0; break;
          case Primitive::kSigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
          case Primitive::kTanh: v = std::tanh(v); break;
          default:
            if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
            v = std::log(v);
            break;
        }
      }
      return out;
    }
    case Primitive::kSoftmax:
    case Primitive::kLogSoftmax: {
      expect_arity(op, in, 1, 1);
      expect_vector(op, *in[0]);
      Tensor out = *in[0];
      const double lse = log_sum_exp(out.data());
      for (double& v : out.data()) v = op == Primitive::kSoftmax ? std::exp(v - lse) : v - lse;
      return out;
    }
    case Primitive::kSum:
    case Primitive::kMean: {
      expect_arity(op, in, 1, 1);
      auto v = in[0]->data();
      double s = 0.0;
      for (double x : v) s += x;
      if (op == Primitive::kMean) s /= static_cast<double>(v.size());
      return Tensor::scalar(s);
    }
    case Primitive::kConcat: {
      if (in.empty()) shape_fail(op, "needs at least one input");
      std::vector<double> out;
      for (const Tensor* t : in) out.insert(out.end(), t->data().begin(), t->data().end());
      return Tensor::vector(std::move(out));
    }
    case Primitive::kOneHot: {
      expect_arity(op, in, 0, 0);
      if (attrs.depth == 0 || attrs.index >= attrs.depth) {
        shape_fail(op, "index " + std::to_string(attrs.index) + " outside depth " + std::to_string(attrs.depth));
      }
      Tensor out({attrs.depth});
      out[attrs.index] = 1.0;
      return out;
    }
    case Primitive::kSlice: {
      expect_arity(op, in, 1, 1);
      if (attrs.length == 0 || attrs.offset + attrs.length > in[0]->size()) {
        shape_fail(op, "range [" + std::to_string(attrs.offset) + ", " + std::to_string(attrs.offset + attrs.length) +
                           ") outside " + shape_str(in[0]->shape()));
      }
      auto v = in[0]->data();
      return Tensor::vector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(attrs.offset),
                                                v.begin() + static_cast<std::ptrdiff_t>(attrs.offset + attrs.length)));
    }
    case Primitive::kReshape: {
      expect_arity(op, in, 1, 1);
      if (shape_size(attrs.shape) != in[0]->size()) {
        shape_fail(op, "cannot reshape " + shape_str(in[0]->shape()) + " to " + shape_str(attrs.shape));
      }
      return in[0]->reshaped(attrs.shape);
    }
  }
  throw std::invalid_argument("unknown primitive id " + std::to_string(static_cast<int>(op)));
}

namespace {

Tensor& accumulate(std::vector<Tensor>& grads, std::size_t id, const Shape& shape) {
  if (grads[id].size() == 0) grads[id] = Tensor(shape);
  return grads[id];
}

}  // namespace

void Tape::backprop_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  const auto& ids = node.inputs;
  auto needs = [&](std::size_t i) { return nodes_[ids[i]].requires_grad; };
  auto input = [&](std::size_t i) -> const Tensor& { return nodes_[ids[i]].value; };
  auto grad_of = [&](std::size_t i) -> Tensor& { return accumulate(grads, ids[i], input(i).shape()); };
  const Tensor& y = node.value;
  auto gv = g.data();

  switch (node.op) {
    case Primitive::kMatmul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.rank() == 2 ? b.dim(1) : 1;
      const auto gm = map_in(g, m, n);
      if (needs(0)) map_out(grad_of(0), m, k).noalias() += gm * map_in(b, k, n).transpose();
      if (needs(1)) map_out(grad_of(1), k, n).noalias() += map_in(a, m, k).transpose() * gm;
      return;
    }
    case Primitive::kConv2d: {
      const Tensor* ins[3] = {&input(0), &input(1), ids.size() == 3 ? &input(2) : nullptr};
      const auto d = conv_dims(std::span<const Tensor* const>(ins, ids.size()), node.attrs.stride);
      const std::size_t patch = d.channels * d.kernel * d.kernel;
      const auto gm = map_in(g, d.filters, d.out_h * d.out_w);
      if (needs(1)) {
        const Matrix cols = im2col(input(0).data(), d);
        map_out(grad_of(1), d.filters, patch).noalias() += gm * cols.transpose();
      }
      if (needs(0)) {
        const Matrix dcols = map_in(input(1), d.filters, patch).transpose() * gm;
        col2im_add(dcols, grad_of(0).data(), d);
      }
      if (ids.size() == 3 && needs(2)) {
        auto gbias = grad_of(2).data();
        for (std::size_t f = 0; f < d.filters; ++f) {
          double s = 0.0;
          for (std::size_t i = 0; i < d.out_h * d.out_w; ++i) s += gv[f * d.out_h * d.out_w + i];
          gbias[f] += s;
        }
      }
      return;
    }
    case Primitive::kAdd:
    case Primitive::kSub: {
      if (needs(0)) {
        auto ga = grad_of(0).data();
        for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
      }
      if (needs(1)) {
        auto gb = grad_of(1).data();
        const double sign = node.op == Primitive::kAdd ? 1.0 : -1.0;
        for (std::size_t i = 0; i < gv.size(); ++i) gb[i] += sign * gv[i];
      }
      return;
    }
    case Primitive::kMul: {
      if (needs(0)) {
        auto ga = grad_of(0).data();
        auto b = input(1).data();
        for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * b[i];
      }
      if (needs(1)) {
        auto gb = grad_of(1).data();
        auto a = input(0).data();
        for (std::size_t i = 0; i < gv.size(); ++i) gb[i] += gv[i] * a[i];
      }
      return;
    }
    case Primitive::kScale:
    case Primitive::kRelu:
    case Primitive::kSigmoid:
    case Primitive::kTanh:
    case Primitive::kLog: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      auto x = input(0).data();
      auto yv = y.data();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        switch (node.op) {
          case Primitive::kScale: ga[i] += gv[i] * node.attrs.factor; break;
          case Primitive::kRelu: ga[i] += x[i] > 0.0 ? gv[i] : 0.0; break;
          case Primitive::kSigmoid: ga[i] += gv[i] * yv[i] * (1.0 - yv[i]); break;
          case Primitive::kTanh: ga[i] += gv[i] * (1.0 - yv[i] * yv[i]); break;
          default: ga[i] += gv[i] / x[i]; break;
        }
      }
      return;
    }
    case Primitive::kSoftmax: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      auto yv = y.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < gv.size(); ++i) dot += gv[i] * yv[i];
      for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += yv[i] * (gv[i] - dot);
      return;
    }
    case Primitive::kLogSoftmax: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      auto yv = y.data();
      double total = 0.0;
      for (double v : gv) total += v;
      for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] - std::exp(yv[i]) * total;
      return;
    }
    case Primitive::kSum:
    case Primitive::kMean: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      const double v = node.op == Primitive::kSum ? gv[0] : gv[0] / static_cast<double>(ga.size());
      for (double& x : ga) x += v;
      return;
    }
    case Primitive::kConcat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t n = input(i).size();
        if (needs(i)) {
          auto gi = grad_of(i).data();
          for (std::size_t j = 0; j < n; ++j) gi[j] += gv[offset + j];
        }
        offset += n;
      }
      return;
    }
    case Primitive::kOneHot:
      return;
    case Primitive::kSlice: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      for (std::size_t j = 0; j < gv.size(); ++j) ga[node.attrs.offset + j] += gv[j];
      return;
    }
    case Primitive::kReshape: {
      if (!needs(0)) return;
      auto ga = grad_of(0).data();
      for (std::size_t j = 0; j < gv.size(); ++j) ga[j] += gv[j];
      return;
    }
  }
}

}  // namespace mghl
