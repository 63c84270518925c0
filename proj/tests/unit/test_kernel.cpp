// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "voxfuse/grad_check.hpp"
#include "voxfuse/graph.hpp"
#include "voxfuse/model.hpp"
#include "voxfuse/optim.hpp"

using namespace voxfuse;

namespace {

template <typename T>
BasicTensor<T> random_tensor(std::vector<int> dims, std::mt19937_64& rng, double scale = 1.0) {
  BasicTensor<T> t(std::move(dims));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values) v = static_cast<T>(n(rng));
  return t;
}

}  // namespace

TEST_CASE("matmul by identity returns the operand") {
  Graph g;
  const Var i2 = g.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Var b = g.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(g.value(g.matmul(i2, b)).values == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul selecting a zero entry") {
  Graph g;
  const Var c = g.matmul(g.input(Tensor::matrix(1, 2, {1, 0})), g.input(Tensor::matrix(2, 1, {0, 5})));
  CHECK(g.value(c).dims == std::vector<int>{1, 1});
  CHECK(g.value(c).values[0] == 0.0f);
}

TEST_CASE("matmul agrees with a triple loop") {
  std::mt19937_64 rng(7);
  const auto a = random_tensor<float>({3, 4}, rng);
  const auto b = random_tensor<float>({4, 2}, rng);
  Graph g;
  const auto& c = g.value(g.matmul(g.input(a), g.input(b)));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (int k = 0; k < 4; ++k) ref += static_cast<double>(a.at(i, k)) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - ref) <= 1e-6);
    }
  }
}

TEST_CASE("matmul rejects mismatched inner dims") {
  Graph g;
  CHECK_THROWS_AS(g.matmul(g.input(Tensor({2, 3})), g.input(Tensor({4, 2}))), ShapeError);
}

TEST_CASE("matmul gradients match finite differences for every shape up to 8") {
  std::mt19937_64 rng(11);
  for (int m = 1; m <= 8; m += 3) {
    for (int k = 1; k <= 8; k += 2) {
      for (int n = 1; n <= 8; n += 3) {
        Param<double> a{random_tensor<double>({m, k}, rng)};
        Param<double> b{random_tensor<double>({k, n}, rng)};
        const auto w = random_tensor<double>({m, n}, rng);
        auto f = [&](BasicGraph<double>& g) { return g.sum(g.mul(g.matmul(g.param(a), g.param(b)), g.input(w))); };
        const auto rep = grad_check(f, {&a, &b}, 1e-6);
        CAPTURE(m);
        CAPTURE(k);
        CAPTURE(n);
        CHECK(rep.max_rel_error <= 1e-5);
      }
    }
  }
}

TEST_CASE("masked_softmax examples") {
  Graph g;
  SUBCASE("uniform logits split evenly") {
    const auto& p = g.value(g.masked_softmax(g.input(Tensor::matrix(1, 2, {0, 0})), Tensor({1, 2})));
    CHECK(p.values[0] == doctest::Approx(0.5));
    CHECK(p.values[1] == doctest::Approx(0.5));
  }
  SUBCASE("masked entry is exactly zero even against a larger logit") {
    const Tensor mask = Tensor::matrix(1, 2, {0, static_cast<float>(kMaskedLogit)});
    const auto& p = g.value(g.masked_softmax(g.input(Tensor::matrix(1, 2, {5, 100})), mask));
    CHECK(p.values[0] == 1.0f);
    CHECK(p.values[1] == 0.0f);
  }
  SUBCASE("fully masked row is rejected") {
    const Tensor mask = Tensor::matrix(1, 2, {static_cast<float>(kMaskedLogit), static_cast<float>(kMaskedLogit)});
    CHECK_THROWS_AS(g.masked_softmax(g.input(Tensor({1, 2})), mask), DomainError);
  }
}

TEST_CASE("masked_softmax matches a direct exp-normalise computation") {
  std::mt19937_64 rng(3);
  const auto logits = random_tensor<float>({2, 3}, rng, 2.0);
  Tensor mask({2, 3});
  mask.at(0, 2) = static_cast<float>(kMaskedLogit);
  Graph g;
  const auto& p = g.value(g.masked_softmax(g.input(logits), mask));
  for (int r = 0; r < 2; ++r) {
    const int open = r == 0 ? 2 : 3;
    double z = 0.0;
    for (int c = 0; c < open; ++c) z += std::exp(static_cast<double>(logits.at(r, c)));
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double ref = c < open ? std::exp(static_cast<double>(logits.at(r, c))) / z : 0.0;
      CHECK(std::abs(p.at(r, c) - ref) <= 1e-6);
      total += p.at(r, c);
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

TEST_CASE("masked_softmax is invariant to a per-row shift") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = random_tensor<float>({4, 6}, rng, 3.0);
    Tensor shifted = logits;
    std::uniform_real_distribution<float> shift(-20.0f, 20.0f);
    for (int r = 0; r < 4; ++r) {
      const float c = shift(rng);
      for (auto& v : shifted.row(r)) v += c;
    }
    Tensor mask({4, 6});
    for (int r = 0; r < 4; ++r) {
      for (int c = r + 2; c < 6; ++c) mask.at(r, c) = static_cast<float>(kMaskedLogit);
    }
    Graph g;
    const auto& a = g.value(g.masked_softmax(g.input(logits), mask));
    const auto& b = g.value(g.masked_softmax(g.input(shifted), mask));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-6);
  }
}

TEST_CASE("grad_check on a quadratic") {
  Param<double> x{BasicTensor<double>({2}, {1.0, 2.0})};
  auto f = [&](BasicGraph<double>& g) {
    const Var v = g.param(x);
    return g.sum(g.mul(v, v));
  };
  BasicGraph<double> g;
  g.backward(f(g));
  const auto* grad = g.param_grad(x);
  REQUIRE(grad != nullptr);
  CHECK((*grad)[0] == doctest::Approx(2.0));
  CHECK((*grad)[1] == doctest::Approx(4.0));
  CHECK(grad_check(f, {&x}, 1e-4).max_rel_error <= 1e-6);
}

TEST_CASE("grad_check rejects a step outside its range") {
  Param<double> x{BasicTensor<double>({1}, {1.0})};
  auto f = [&](BasicGraph<double>& g) { return g.sum(g.param(x)); };
  CHECK_THROWS_AS(grad_check(f, {&x}, 1e-2), DomainError);
  CHECK_THROWS_AS(grad_check(f, {&x}, 1e-8), DomainError);
}

TEST_CASE("grad_check names the op producing a non-finite value") {
  Param<double> x{BasicTensor<double>({1}, {1e300})};
  auto f = [&](BasicGraph<double>& g) {
    const Var v = g.param(x);
    return g.sum(g.mul(v, v));
  };
  try {
    grad_check(f, {&x}, 1e-4);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
}

TEST_CASE("frozen leaves never receive a gradient buffer") {
  Param<float> w{Tensor::matrix(2, 2, {1, 2, 3, 4}), false};
  Param<float> b{Tensor::matrix(2, 2, {1, 1, 1, 1}), true};
  Graph g;
  const Var y = g.sum(g.matmul(g.param(w), g.param(b)));
  g.backward(y);
  g.accumulate_param_grads();
  CHECK(g.param_grad(w) == nullptr);
  CHECK_FALSE(w.value.grad.has_value());
  CHECK(b.value.grad.has_value());
}

TEST_CASE("backward visits each recorded op once") {
  Param<float> w{Tensor::matrix(2, 2, {1, 2, 3, 4})};
  Graph g;
  const Var x = g.input(Tensor::matrix(1, 2, {1, 1}));
  const Var h = g.gelu(g.matmul(x, g.param(w)));
  const Var y = g.sum(g.add(h, h));
  g.backward(y);
  CHECK(g.last_backward_visits() == g.size());
}

TEST_CASE("layer_norm, embedding and cross_entropy gradients") {
  std::mt19937_64 rng(9);
  Param<double> table{random_tensor<double>({5, 4}, rng)};
  Param<double> gamma{random_tensor<double>({4}, rng)};
  Param<double> beta{random_tensor<double>({4}, rng)};
  Param<double> w{random_tensor<double>({4, 5}, rng)};
  const std::vector<int> ids{0, 3, 3, 1};
  const std::vector<int> targets{2, 4, 0, 1};
  for (auto red : {Reduction::kMean, Reduction::kSum}) {
    auto f = [&](BasicGraph<double>& g) {
      const Var e = g.embedding(g.param(table), ids);
      const Var h = g.layer_norm(e, g.param(gamma), g.param(beta));
      return g.cross_entropy(g.matmul(h, g.param(w)), targets, red);
    };
    CHECK(grad_check(f, {&table, &gamma, &beta, &w}, 1e-5).max_rel_error <= 1e-6);
  }
}

TEST_CASE("cross_entropy mean equals sum over rows") {
  const Tensor logits = Tensor::matrix(2, 3, {1, 2, 3, 0, 0, 0});
  const std::vector<int> t{2, 0};
  Graph g;
  const float mean = g.value(g.cross_entropy(g.input(logits), t)).values[0];
  const float sum = g.value(g.cross_entropy(g.input(logits), t, Reduction::kSum)).values[0];
  const double ref = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))) + std::log(3.0);
  CHECK(sum == doctest::Approx(ref).epsilon(1e-6));
  CHECK(mean == doctest::Approx(ref / 2).epsilon(1e-6));
}

TEST_CASE("attention gradients with a mask") {
  std::mt19937_64 rng(21);
  Param<double> q{random_tensor<double>({3, 4}, rng)};
  Param<double> k{random_tensor<double>({5, 4}, rng)};
  Param<double> v{random_tensor<double>({5, 4}, rng)};
  BasicTensor<double> mask({3, 5});
  for (int t = 0; t < 3; ++t) {
    for (int s = 2 * t + 1; s < 5; ++s) mask.at(t, s) = kMaskedLogit;
  }
  const auto w = random_tensor<double>({3, 4}, rng);
  auto f = [&](BasicGraph<double>& g) {
    return g.sum(g.mul(g.attention(g.param(q), g.param(k), g.param(v), &mask, 2), g.input(w)));
  };
  CHECK(grad_check(f, {&q, &k, &v}, 1e-5).max_rel_error <= 1e-6);
}

TEST_CASE("dropout is the identity at rate zero and scales kept units") {
  std::mt19937_64 rng(1);
  Graph g;
  const Tensor x = Tensor::matrix(1, 4, {1, 2, 3, 4});
  CHECK(g.value(g.dropout(g.input(x), 0.0f, rng)).values == x.values);
  const auto& y = g.value(g.dropout(g.input(x), 0.5f, rng));
  for (int i = 0; i < 4; ++i) CHECK((y.values[i] == 0.0f || y.values[i] == 2.0f * x.values[i]));
}

TEST_CASE("adam step matches a hand-computed update") {
  Param<float> p{Tensor({1}, {1.0f})};
  Adam opt({&p}, AdamOptions{0.1f});
  p.value.grad = std::vector<float>{0.5f};
  opt.step();
  // m̂ = g, v̂ = g², so the first update is lr · g / (|g| + eps).
  CHECK(p.value.values[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-6));
  CHECK_FALSE(p.value.grad.has_value());
  Param<float> frozen{Tensor({1}, {1.0f}), false};
  Adam opt2({&frozen}, AdamOptions{0.1f});
  opt2.step();
  CHECK(frozen.value.values[0] == 1.0f);
}

TEST_CASE("identical seeds and inputs give bit-identical outputs") {
  auto run = [] {
    FusedModel m(AcousticConfig{}, LmConfig{}, 3, 42);
    Graph g;
    const std::vector<int> toks{kBos, 1, 2, 3};
    return g.value(lm_forward(g, m, toks, std::nullopt, FusionMode::kNone).logits).values;
  };
  CHECK(run() == run());
}
