// SPDX-License-Identifier: Apache-2.0
//
// Forward-semantics tests for the tensor primitives, against hand values and
// independent oracles evaluated in the test.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "urm/ops.hpp"

using namespace urm;
using namespace urm::test;

TEST_CASE("matmul identity and hand-checked values") {
  Rng rng(7);
  const Tensor x = randn({3, 3}, rng);
  Tensor eye = Tensor::zeros({3, 3}, Precision::f64);
  for (int i = 0; i < 3; ++i) eye.mutable_storage().set(i * 3 + i, 1.0);
  CHECK(bit_equal(ops::matmul(eye, x), x));

  const Tensor a = Tensor::of({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::of({2, 1}, {0, 1});
  const Tensor c = ops::matmul(a, b);
  CHECK(c.at(0) == 2.0);
  CHECK(c.at(1) == 4.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(11);
  const Tensor a = randn({4, 5}, rng);
  const Tensor b = randn({5, 3}, rng);
  CHECK(max_abs_diff(ops::matmul(a, b), naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul broadcasts batch dimensions") {
  Rng rng(13);
  const Tensor a = randn({2, 3, 4}, rng);
  const Tensor b = randn({4, 5}, rng);
  const Tensor c = ops::matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 5});
  for (std::size_t batch = 0; batch < 2; ++batch) {
    Tensor ab = Tensor::zeros({3, 4}, Precision::f64);
    for (std::size_t i = 0; i < 12; ++i)
      ab.mutable_storage().set(i, a.at(batch * 12 + i));
    const Tensor expect = naive_matmul(ab, b);
    for (std::size_t i = 0; i < 15; ++i)
      CHECK(c.at(batch * 15 + i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("matmul rejects mismatched inner dims naming both shapes") {
  Rng rng(3);
  const Tensor a = randn({2, 3}, rng);
  const Tensor b = randn({4, 2}, rng);
  CHECK_THROWS_WITH_AS(ops::matmul(a, b),
                       doctest::Contains("(2, 3)"), ShapeError);
}

TEST_CASE("softmax uniform, shift invariance and frozen values") {
  const Tensor z = Tensor::zeros({4}, Precision::f64);
  const Tensor u = ops::softmax(z, 0);
  for (int i = 0; i < 4; ++i) CHECK(u.at(i) == doctest::Approx(0.25));

  Rng rng(5);
  const Tensor x = randn({6}, rng);
  Tensor shifted = x.clone();
  for (std::size_t i = 0; i < 6; ++i)
    shifted.mutable_storage().set(i, x.at(i) + 17.25);
  CHECK(max_abs_diff(ops::softmax(x, 0), ops::softmax(shifted, 0)) < 1e-12);

  // exp-normalize of [1,2,3] evaluated at 40 decimal digits.
  const Tensor s = ops::softmax(Tensor::of({3}, {1, 2, 3}), 0);
  CHECK(s.at(0) == doctest::Approx(0.090030573170380458).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.24472847105479765).epsilon(1e-12));
  CHECK(s.at(2) == doctest::Approx(0.66524095577482189).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for random tensors") {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t r = 1 + rng.uniform_int(1, 6);
    const std::size_t c = 1 + rng.uniform_int(1, 9);
    const Tensor x = randn({r, c}, rng, Precision::f64, 4.0);
    const Tensor y = ops::softmax(x, 1);
    for (std::size_t i = 0; i < r; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double v = y.at(i * c + j);
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm collapses constant rows and matches row stats") {
  const Tensor gamma = Tensor::full({8}, 1.0, Precision::f64);
  const Tensor beta = Tensor::zeros({8}, Precision::f64);

  // 3.5 is dyadic, so the row mean is exact and the output is exactly zero.
  const Tensor constant = Tensor::full({2, 8}, 3.5, Precision::f64);
  const Tensor zeroed = ops::layer_norm(constant, gamma, beta);
  for (std::size_t i = 0; i < zeroed.numel(); ++i) CHECK(zeroed.at(i) == 0.0);

  // Non-dyadic constants only leave rounding residue.
  const Tensor near = ops::layer_norm(Tensor::full({2, 8}, 3.7, Precision::f64),
                                      gamma, beta);
  for (std::size_t i = 0; i < near.numel(); ++i)
    CHECK(std::abs(near.at(i)) < 1e-11);

  const Tensor g0 = Tensor::zeros({8}, Precision::f64);
  const Tensor bb = Tensor::full({8}, -1.5, Precision::f64);
  Rng rng(31);
  const Tensor x = randn({2, 8}, rng);
  const Tensor shifted = ops::layer_norm(x, g0, bb);
  for (std::size_t i = 0; i < shifted.numel(); ++i) CHECK(shifted.at(i) == -1.5);

  const Tensor y = ops::layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r * 8 + c);
    mean /= 8.0;
    for (std::size_t c = 0; c < 8; ++c) {
      const double d = y.at(r * 8 + c) - mean;
      var += d * d;
    }
    var /= 8.0;
    CHECK(std::abs(mean) < 1e-7);
    CHECK(std::abs(var - 1.0) < 1e-4);  // eps effect
  }
}

TEST_CASE("unary elementwise values and ranges") {
  const Tensor zero = Tensor::zeros({1}, Precision::f64);
  CHECK(ops::tanh(zero).at(0) == 0.0);
  CHECK(ops::sigmoid(zero).at(0) == 0.5);

  Rng rng(41);
  const Tensor x = randn({64}, rng, Precision::f64, 5.0);
  const Tensor t = ops::tanh(x);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    CHECK(t.at(i) > -1.0);
    CHECK(t.at(i) < 1.0);
  }

  // 0.5 * x * (1 + erf(x / sqrt(2))) at x = 1, evaluated at 40 digits.
  const Tensor g = ops::gelu(Tensor::of({1}, {1.0}));
  CHECK(g.at(0) == doctest::Approx(0.84134474606854295).epsilon(1e-14));

  const Tensor n = ops::negate(Tensor::of({2}, {1.5, -2.0}));
  CHECK(n.at(0) == -1.5);
  CHECK(n.at(1) == 2.0);
}

TEST_CASE("binary elementwise identities and broadcasting") {
  Rng rng(43);
  const Tensor a = randn({3, 4}, rng);
  CHECK(bit_equal(ops::add(a, Tensor::zeros({3, 4}, Precision::f64)), a));
  CHECK(bit_equal(ops::mul(a, Tensor::full({3, 4}, 1.0, Precision::f64)), a));

  const Tensor bias = Tensor::of({4}, {1, 2, 3, 4});
  const Tensor c = ops::add(a, bias);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(c.at(i * 4 + j) == a.at(i * 4 + j) + bias.at(j));

  CHECK_THROWS_AS(ops::add(a, Tensor::zeros({5, 4}, Precision::f64)),
                  ShapeError);
}

TEST_CASE("concat and slice are exact inverses") {
  Rng rng(47);
  const Tensor a = randn({3, 4}, rng);
  const Tensor b = randn({5, 4}, rng);
  CHECK(bit_equal(ops::concat({a}, 0), a));

  const Tensor joined = ops::concat({a, b}, 0);
  REQUIRE(joined.shape() == Shape{8, 4});
  CHECK(bit_equal(ops::slice(joined, 0, 3, 5), b));
  CHECK(bit_equal(ops::slice(joined, 0, 0, 3), a));

  const Tensor c = randn({3, 2}, rng);
  const Tensor wide = ops::concat({a, c}, 1);
  REQUIRE(wide.shape() == Shape{3, 6});
  CHECK(bit_equal(ops::slice(wide, 1, 4, 2), c));

  CHECK_THROWS_AS(ops::concat({a, c}, 0), ShapeError);
  CHECK_THROWS_AS(ops::slice(a, 0, 2, 5), ShapeError);
}

TEST_CASE("reduce_mean matches the explicit sum oracle") {
  const Tensor c = Tensor::full({5, 3}, 2.5, Precision::f64);
  const Tensor mc = ops::reduce_mean(c, 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(mc.at(i) == doctest::Approx(2.5));

  CHECK(ops::reduce_mean(Tensor::of({3}, {1, 2, 3}), 0).at(0) ==
        doctest::Approx(2.0));

  Rng rng(53);
  const Tensor x = randn({6, 4}, rng);
  const Tensor m0 = ops::reduce_mean(x, 0);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s += x.at(i * 4 + j);
    CHECK(std::abs(m0.at(j) - s / 6.0) <= 1e-12);
  }
}

TEST_CASE("outer product structure") {
  const Tensor u = Tensor::of({3}, {1, 2, 3});
  const Tensor z = Tensor::zeros({3}, Precision::f64);
  const Tensor uz = ops::outer(u, z);
  for (std::size_t i = 0; i < 9; ++i) CHECK(uz.at(i) == 0.0);

  Tensor e1 = Tensor::zeros({4}, Precision::f64);
  Tensor e2 = Tensor::zeros({4}, Precision::f64);
  e1.mutable_storage().set(1, 1.0);
  e2.mutable_storage().set(2, 1.0);
  const Tensor basis = ops::outer(e1, e2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(basis.at(i * 4 + j) == (i == 1 && j == 2 ? 1.0 : 0.0));

  Rng rng(59);
  const Tensor a = ops::outer(randn({5}, rng), randn({5}, rng));
  // Every 2x2 minor of a rank-1 matrix vanishes.
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j)
      for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t l = k + 1; l < 5; ++l) {
          const double det = a.at(i * 5 + k) * a.at(j * 5 + l) -
                             a.at(i * 5 + l) * a.at(j * 5 + k);
          CHECK(std::abs(det) < 1e-10);
        }

  CHECK_THROWS_AS(ops::outer(u, Tensor::zeros({4}, Precision::f64)),
                  ShapeError);
}

TEST_CASE("cross_entropy against a long-double log-sum-exp oracle") {
  Rng rng(61);
  const std::size_t B = 4, K = 7;
  const Tensor logits = randn({B, K}, rng, Precision::f64, 3.0);
  const std::vector<int> labels = {2, 0, 6, 3};
  const double got = ops::cross_entropy(logits, labels).item();

  long double acc = 0.0L;
  for (std::size_t b = 0; b < B; ++b) {
    long double denom = 0.0L;
    for (std::size_t k = 0; k < K; ++k)
      denom += std::exp(static_cast<long double>(logits.at(b * K + k)));
    acc += std::log(denom) -
           static_cast<long double>(logits.at(b * K + labels[b]));
  }
  CHECK(std::abs(got - static_cast<double>(acc / B)) < 1e-8);

  // Uniform logits: CE is exactly ln(K).
  const Tensor uni = Tensor::zeros({2, 5}, Precision::f64);
  const std::vector<int> lab2 = {1, 4};
  CHECK(ops::cross_entropy(uni, lab2).item() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));

  const std::vector<int> bad = {2, 9, 0, 1};
  CHECK_THROWS_AS(ops::cross_entropy(logits, bad), ContractError);
}

TEST_CASE("transpose and reshape round trips") {
  Rng rng(67);
  const Tensor x = randn({3, 5}, rng);
  const Tensor xt = ops::transpose(x);
  REQUIRE(xt.shape() == Shape{5, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(xt.at(j * 3 + i) == x.at(i * 5 + j));
  CHECK(bit_equal(ops::transpose(xt), x));

  const Tensor r = ops::reshape(x, {5, 3});
  CHECK(r.storage() == x.storage());
  CHECK_THROWS_AS(ops::reshape(x, {4, 4}), ShapeError);
}

TEST_CASE("forward primitives keep finite inputs finite") {
  Rng rng(71);
  const Tensor x = randn({6, 6}, rng, Precision::f64, 10.0);
  CHECK(ops::softmax(x, 1).storage().all_finite());
  CHECK(ops::gelu(x).storage().all_finite());
  CHECK(ops::layer_norm(x, Tensor::full({6}, 1.0, Precision::f64),
                        Tensor::zeros({6}, Precision::f64))
            .storage()
            .all_finite());
  CHECK(ops::matmul(x, x).storage().all_finite());
}
