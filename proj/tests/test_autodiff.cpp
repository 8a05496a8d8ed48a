// SPDX-License-Identifier: Apache-2.0
//
// Tape semantics and per-primitive gradient verification against central
// finite differences.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "urm/grad_check.hpp"
#include "urm/ops.hpp"

using namespace urm;
using namespace urm::test;

namespace {

Tensor leaf(Shape shape, Rng& rng, double stddev = 1.0) {
  return Tensor::randn(std::move(shape), rng, 0.0, stddev, Precision::f64,
                       true);
}

}  // namespace

TEST_CASE("backward of sum(x) is all ones") {
  Rng rng(1);
  Tensor x = leaf({3, 4}, rng);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::sum(x);
  }
  backward(out, tape);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("backward of sum(tanh(x)) at zero is all ones") {
  Tensor x = Tensor::zeros({5}, Precision::f64, true);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::sum(ops::tanh(x));
  }
  backward(out, tape);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("repeated backward without reset accumulates") {
  Rng rng(2);
  Tensor x = leaf({4}, rng);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::sum(x);
  }
  backward(out, tape);
  backward(out, tape);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == 2.0);
}

TEST_CASE("backward requires a scalar output") {
  Rng rng(3);
  Tensor x = leaf({4}, rng);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::tanh(x);
  }
  CHECK_THROWS_AS(backward(out, tape), ContractError);
}

TEST_CASE("gradient of a product with respect to one factor is the other") {
  Rng rng(4);
  Tensor a = leaf({3, 3}, rng);
  Tensor b = Tensor::randn({3, 3}, rng, 0.0, 1.0, Precision::f64);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::sum(ops::mul(a, b));
  }
  backward(out, tape);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(a.grad_at(i) == doctest::Approx(b.at(i)).epsilon(1e-14));
}

TEST_CASE("gradients accumulate additively across consumers") {
  Rng rng(5);
  Tensor x = leaf({3}, rng);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    // x feeds two consumers; d/dx (sum(x) + sum(x*x)) = 1 + 2x.
    out = ops::add(ops::sum(x), ops::sum(ops::mul(x, x)));
  }
  backward(out, tape);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(x.grad_at(i) == doctest::Approx(1.0 + 2.0 * x.at(i)).epsilon(1e-14));
}

TEST_CASE("tape replay is deterministic bit for bit") {
  Rng rng(6);
  Tensor w = leaf({6, 6}, rng);
  Tensor x = Tensor::randn({4, 6}, rng, 0.0, 1.0, Precision::f64);
  auto run = [&]() {
    w.zero_grad();
    Tape tape;
    Tensor out;
    {
      Tape::Scope scope(tape);
      out = ops::sum(ops::tanh(ops::matmul(x, ops::softmax(w, 1))));
    }
    backward(out, tape);
    std::vector<double> g(w.numel());
    for (std::size_t i = 0; i < w.numel(); ++i) g[i] = w.grad_at(i);
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("linear function gradcheck is exact to 1e-9") {
  Rng rng(7);
  Tensor w = Tensor::randn({5, 3}, rng, 0.0, 1.0, Precision::f64);
  Tensor x = leaf({2, 5}, rng);
  const auto rep =
      grad_check([&] { return ops::sum(ops::matmul(x, w)); }, {{"x", x}});
  CHECK(rep.max_rel_error < 1e-9);
}

TEST_CASE("per-primitive gradients match central differences") {
  Rng rng(8);

  SUBCASE("matmul") {
    Tensor a = leaf({3, 4}, rng);
    Tensor b = leaf({4, 2}, rng);
    const auto rep = grad_check(
        [&] { return ops::sum(ops::tanh(ops::matmul(a, b))); },
        {{"a", a}, {"b", b}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("batched matmul with broadcast") {
    Tensor a = leaf({2, 3, 4}, rng);
    Tensor b = leaf({4, 2}, rng);
    const auto rep = grad_check(
        [&] { return ops::sum(ops::tanh(ops::matmul(a, b))); },
        {{"a", a}, {"b", b}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("softmax") {
    Tensor x = leaf({3, 5}, rng);
    Tensor m = Tensor::randn({3, 5}, rng, 0.0, 1.0, Precision::f64);
    const auto rep = grad_check(
        [&] { return ops::sum(ops::mul(ops::softmax(x, 1), m)); }, {{"x", x}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("layer_norm") {
    Tensor x = leaf({4, 6}, rng);
    Tensor gamma = leaf({6}, rng);
    Tensor beta = leaf({6}, rng);
    Tensor m = Tensor::randn({4, 6}, rng, 0.0, 1.0, Precision::f64);
    const auto rep = grad_check(
        [&] {
          return ops::sum(ops::mul(ops::layer_norm(x, gamma, beta), m));
        },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("unary kinds") {
    for (auto kind : {ops::UnaryKind::sigmoid, ops::UnaryKind::tanh,
                      ops::UnaryKind::gelu, ops::UnaryKind::negate}) {
      Tensor x = leaf({3, 3}, rng);
      Tensor m = Tensor::randn({3, 3}, rng, 0.0, 1.0, Precision::f64);
      const auto rep = grad_check(
          [&] { return ops::sum(ops::mul(ops::unary(kind, x), m)); },
          {{"x", x}});
      CHECK(rep.max_rel_error < 1e-5);
    }
  }
  SUBCASE("binary kinds with broadcasting") {
    for (auto kind : {ops::BinaryKind::add, ops::BinaryKind::sub,
                      ops::BinaryKind::mul}) {
      Tensor a = leaf({3, 4}, rng);
      Tensor b = leaf({4}, rng);
      Tensor m = Tensor::randn({3, 4}, rng, 0.0, 1.0, Precision::f64);
      const auto rep = grad_check(
          [&] {
            return ops::sum(ops::mul(ops::binary(kind, a, b), m));
          },
          {{"a", a}, {"b", b}});
      CHECK(rep.max_rel_error < 1e-5);
    }
  }
  SUBCASE("concat and slice") {
    Tensor a = leaf({2, 3}, rng);
    Tensor b = leaf({2, 2}, rng);
    Tensor m = Tensor::randn({2, 3}, rng, 0.0, 1.0, Precision::f64);
    const auto rep = grad_check(
        [&] {
          const Tensor j = ops::concat({a, b}, 1);
          return ops::sum(ops::mul(ops::slice(j, 1, 1, 3), m));
        },
        {{"a", a}, {"b", b}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("reduce_mean, scale, transpose, reshape") {
    Tensor x = leaf({4, 6}, rng);
    Tensor m = Tensor::randn({3, 4}, rng, 0.0, 1.0, Precision::f64);
    const auto rep = grad_check(
        [&] {
          Tensor t = ops::transpose(x);                    // (6, 4)
          t = ops::reshape(ops::scale(t, 0.7), {2, 3, 4});  // (2, 3, 4)
          return ops::sum(ops::mul(ops::reduce_mean(t, 0), m));
        },
        {{"x", x}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("outer") {
    Tensor u = leaf({5}, rng);
    Tensor w = leaf({5}, rng);
    Tensor m = Tensor::randn({5, 5}, rng, 0.0, 1.0, Precision::f64);
    const auto rep = grad_check(
        [&] { return ops::sum(ops::mul(ops::outer(u, w), m)); },
        {{"u", u}, {"w", w}});
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("cross_entropy") {
    Tensor z = leaf({3, 6}, rng);
    const std::vector<int> labels = {1, 5, 0};
    const auto rep = grad_check(
        [&] { return ops::cross_entropy(z, labels); }, {{"z", z}});
    CHECK(rep.max_rel_error < 1e-5);
  }
}

TEST_CASE("grad_check rejects a nondeterministic function") {
  Rng rng(9);
  Tensor x = leaf({2}, rng);
  int calls = 0;
  CHECK_THROWS_AS(grad_check(
                      [&] {
                        ++calls;
                        return ops::sum(ops::scale(x, 1.0 + 0.5 * calls));
                      },
                      {{"x", x}}),
                  ContractError);
}

TEST_CASE("grad_check requires f64 leaves") {
  Tensor x = Tensor::zeros({2}, Precision::f32, true);
  CHECK_THROWS_AS(grad_check([&] { return ops::sum(x); }, {{"x", x}}),
                  ContractError);
}
