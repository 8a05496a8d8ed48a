// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "urm/tensor.hpp"

namespace urm::test {

inline Tensor randn(Shape shape, Rng& rng, Precision p = Precision::f64,
                    double stddev = 1.0) {
  return Tensor::randn(std::move(shape), rng, 0.0, stddev, p);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
  return worst;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.storage() == b.storage();
}

/// Independent triple-loop matrix product for 2-D double tensors.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  Tensor c = Tensor::zeros({m, p}, Precision::f64);
  double* pc = c.mutable_data<double>();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a.at(i * k + l) * b.at(l * p + j);
      pc[i * p + j] = acc;
    }
  return c;
}

/// Row permutation of a 2-D tensor.
inline Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  Tensor out = Tensor::zeros({n, c}, x.precision());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.mutable_storage().set(i * c + j, x.at(perm[i] * c + j));
  return out;
}

/// P A P^T for a square matrix under a row permutation.
inline Tensor conjugate_by_permutation(const Tensor& a,
                                       const std::vector<std::size_t>& perm) {
  const std::size_t n = a.shape()[0];
  Tensor out = Tensor::zeros({n, n}, a.precision());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.mutable_storage().set(i * n + j, a.at(perm[i] * n + perm[j]));
  return out;
}

}  // namespace urm::test
