#include <doctest.h>

#include <cmath>
#include <random>

#include "mghl/tensor.hpp"

using namespace mghl;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Straightforward valid convolution, one output element at a time.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t F = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H - K) / stride + 1, Wo = (W - K) / stride + 1;
  Tensor y({F, Ho, Wo});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = b[f];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj)
              s += w[((f * C + c) * K + ki) * K + kj] * x[(c * H + i * stride + ki) * W + j * stride + kj];
        y[(f * Ho + i) * Wo + j] = s;
      }
  return y;
}

}  // namespace

TEST_CASE("tensor construction checks sizes") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS(Tensor({2}).item());
}

TEST_CASE("conv2d output shapes follow valid-convolution arithmetic") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 84, 84}));
  Var h = conv2d(x, tape.constant(Tensor({16, 1, 8, 8})), tape.constant(Tensor({16})), 4);
  CHECK(h.shape() == Shape{16, 20, 20});
  Var h2 = conv2d(h, tape.constant(Tensor({32, 16, 4, 4})), tape.constant(Tensor({32})), 2);
  CHECK(h2.shape() == Shape{32, 9, 9});
}

TEST_CASE("conv2d matches the naive loop oracle") {
  std::mt19937_64 rng(7);
  for (std::size_t stride : {1u, 2u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = random_tensor({2, 6, 6}, rng);
      const Tensor w = random_tensor({3, 2, 3, 3}, rng);
      const Tensor b = random_tensor({3}, rng);
      Tape tape;
      const Tensor y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride).value();
      const Tensor ref = naive_conv(x, w, b, stride);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("elementwise primitives") {
  Tape tape;
  Var r = relu(tape.constant(Tensor::vector({-1.0, 0.0, 2.0})));
  CHECK(r.value() == Tensor::vector({0.0, 0.0, 2.0}));

  Var s = softmax(tape.constant(Tensor({5})));
  for (double p : s.value().data()) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({1.0, 0.0}))), std::domain_error);
  CHECK_THROWS_AS(add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), ShapeError);
  CHECK_THROWS_AS(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2}))), ShapeError);
}

TEST_CASE("shape errors name the primitive") {
  Tape tape;
  try {
    mul(tape.constant(Tensor({2})), tape.constant(Tensor({4})));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
}

TEST_CASE("unknown primitive id is rejected") {
  Tape tape;
  Var a = tape.constant(Tensor({1}));
  CHECK_THROWS_AS(tape.apply(static_cast<Primitive>(999), {a}), std::invalid_argument);
}

TEST_CASE("softmax is a probability vector") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    const Tensor p = softmax(tape.constant(random_tensor({7}, rng, -30.0, 30.0))).value();
    double sum = 0.0;
    for (double v : p.data()) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward on simple expressions") {
  SUBCASE("linear") {
    Tape tape;
    Var w = tape.parameter("w", Tensor::vector({1.0, 2.0}));
    Var x = tape.constant(Tensor::vector({3.0, 4.0}));
    const auto g = tape.backward(sum(mul(w, x)));
    CHECK(g.at("w") == Tensor::vector({3.0, 4.0}));
  }
  SUBCASE("dead relu") {
    Tape tape;
    Var c = tape.parameter("c", Tensor::scalar(2.0));
    const auto g = tape.backward(mul(relu(tape.constant(Tensor::scalar(-5.0))), c));
    CHECK(g.at("c") == Tensor::scalar(0.0));
  }
  SUBCASE("untouched parameter gets zeros") {
    Tape tape;
    Var a = tape.parameter("a", Tensor::vector({1.0, 1.0}));
    tape.parameter("unused", Tensor({2, 2}, 5.0));
    const auto g = tape.backward(sum(a));
    CHECK(g.at("unused") == Tensor({2, 2}));
  }
}

TEST_CASE("backward contract") {
  Tape tape;
  Var a = tape.parameter("a", Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  Var s = sum(a);
  tape.backward(s);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);
  CHECK_THROWS_AS(sum(a), std::logic_error);
}

TEST_CASE("gradient_check examples") {
  const TensorFunction square = [](Tape&, Var x) { return sum(mul(x, x)); };
  CHECK(gradient_check(square, Tensor::scalar(3.0), 1e-5) < 1e-6);

  const TensorFunction constant = [](Tape& t, Var) { return t.constant(Tensor::scalar(7.0)); };
  CHECK(gradient_check(constant, Tensor::vector({1.0, 2.0})) == 0.0);

  const TensorFunction blowup = [](Tape&, Var x) { return sum(log(x)); };
  CHECK_THROWS_AS(gradient_check(blowup, Tensor::scalar(1e-6), 1e-5), std::domain_error);
}

TEST_CASE("every primitive's gradient matches central differences") {
  std::mt19937_64 rng(11);
  auto rnd = [&](Shape s) { return random_tensor(std::move(s), rng); };
  auto pos = [&](Shape s) { return random_tensor(std::move(s), rng, 0.5, 2.0); };
  const Tensor weights = rnd({6});

  // Each case maps a 6-element input through one primitive to a scalar via a
  // fixed random projection so that every output coordinate matters.
  auto project = [weights](Tape& t, Var y) {
    const std::size_t n = shape_size(y.shape());
    Tensor w({n});
    for (std::size_t i = 0; i < n; ++i) w[i] = weights[i % weights.size()] + 0.1 * static_cast<double>(i);
    return sum(mul(reshape(y, {n}), t.constant(w)));
  };

  const Tensor other = rnd({6});
  const Tensor mat = rnd({3, 2});
  const Tensor cw = rnd({2, 1, 2, 2});
  const Tensor cb = rnd({2});
  const Tensor cx = rnd({1, 3, 3});

  std::vector<std::pair<const char*, TensorFunction>> cases = {
      {"matmul", [&](Tape& t, Var x) { return project(t, matmul(t.constant(mat), reshape(x, {2, 3}))); }},
      {"matvec", [&](Tape& t, Var x) { return project(t, matmul(reshape(x, {3, 2}), t.constant(Tensor::vector({0.3, -1.2})))); }},
      {"conv2d", [&](Tape& t, Var x) { return project(t, conv2d(reshape(x, {1, 2, 3}), t.constant(cw), t.constant(cb), 1)); }},
      {"conv2d weight", [&](Tape& t, Var x) {
         Var w = reshape(slice(concat(std::vector<Var>{x, x}), 0, 8), {2, 1, 2, 2});
         return project(t, conv2d(t.constant(cx), w, t.constant(cb), 1));
       }},
      {"add", [&](Tape& t, Var x) { return project(t, add(x, t.constant(other))); }},
      {"sub", [&](Tape& t, Var x) { return project(t, sub(t.constant(other), x)); }},
      {"mul", [&](Tape& t, Var x) { return project(t, mul(x, x)); }},
      {"scale", [&](Tape& t, Var x) { return project(t, scale(x, -1.7)); }},
      {"relu", [&](Tape& t, Var x) { return project(t, relu(x)); }},
      {"sigmoid", [&](Tape& t, Var x) { return project(t, sigmoid(x)); }},
      {"tanh", [&](Tape& t, Var x) { return project(t, tanh(x)); }},
      {"softmax", [&](Tape& t, Var x) { return project(t, softmax(x)); }},
      {"log_softmax", [&](Tape& t, Var x) { return project(t, log_softmax(x)); }},
      {"mean", [&](Tape&, Var x) { return mean(mul(x, x)); }},
      {"concat", [&](Tape& t, Var x) { return project(t, concat(std::vector<Var>{x, scale(x, 2.0)})); }},
      {"slice", [&](Tape& t, Var x) { return project(t, slice(x, 2, 3)); }},
      {"one_hot", [&](Tape& t, Var x) { return sum(mul(x, one_hot(t, 6, 4))); }},
  };
  for (const auto& [name, f] : cases) {
    const std::string label = name;
    CAPTURE(label);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor point = rnd({6});
      // Keep relu away from its kink.
      for (double& v : point.data()) if (std::abs(v) < 1e-3) v = 0.5;
      CHECK(gradient_check(f, point) < 1e-4);
    }
  }
  const TensorFunction logf = [&](Tape& t, Var x) { return project(t, log(x)); };
  CHECK(gradient_check(logf, pos({6})) < 1e-4);
}

TEST_CASE("random three-layer net gradients match finite differences") {
  std::mt19937_64 rng(5);
  for (int net = 0; net < 5; ++net) {
    const Tensor x = random_tensor({4}, rng);
    const Tensor w1 = random_tensor({5, 4}, rng), w2 = random_tensor({5, 5}, rng), w3 = random_tensor({3, 5}, rng);
    const Tensor b1 = random_tensor({5}, rng);
    // Perturb one layer at a time with the others fixed.
    auto forward = [&](Tape& t, Var a, Var b, Var c) {
      Var h = tanh(add(matmul(a, t.constant(x)), t.constant(b1)));
      h = sigmoid(matmul(b, h));
      return sum(log_softmax(matmul(c, h)));
    };
    CHECK(gradient_check([&](Tape& t, Var w) { return forward(t, w, t.constant(w2), t.constant(w3)); }, w1) < 1e-4);
    CHECK(gradient_check([&](Tape& t, Var w) { return forward(t, t.constant(w1), w, t.constant(w3)); }, w2) < 1e-4);
    CHECK(gradient_check([&](Tape& t, Var w) { return forward(t, t.constant(w1), t.constant(w2), w); }, w3) < 1e-4);
  }
}

TEST_CASE("finite inputs give finite outputs") {
  std::mt19937_64 rng(9);
  Tape tape;
  Var x = tape.constant(random_tensor({8}, rng, -50.0, 50.0));
  for (Var y : {relu(x), sigmoid(x), tanh(x), softmax(x), log_softmax(x), mean(x), sum(x)}) {
    CHECK(y.value().all_finite());
  }
}
