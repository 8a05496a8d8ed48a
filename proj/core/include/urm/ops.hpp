// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "urm/tape.hpp"
#include "urm/tensor.hpp"

namespace urm::ops {

// The closed set of differentiable primitives the model is built from.
// Every op records a backward rule on the thread-active Tape (if any) when a
// gradient path runs through its inputs. Inputs must share precision.

enum class UnaryKind : std::uint8_t { sigmoid, tanh, gelu, negate };
enum class BinaryKind : std::uint8_t { add, sub, mul };

/// Batched matrix product a[.., M, K] x b[.., K, P] -> [.., M, P].
/// Leading (batch) dimensions broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swap the last two axes (rank >= 2).
Tensor transpose(const Tensor& x);

/// Same data, new shape; numel must match.
Tensor reshape(const Tensor& x, Shape shape);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalize the last axis to zero mean / unit variance, then affine.
/// gamma and beta are rank-1 of the last-axis width.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor unary(UnaryKind kind, const Tensor& x);
inline Tensor sigmoid(const Tensor& x) { return unary(UnaryKind::sigmoid, x); }
inline Tensor tanh(const Tensor& x) { return unary(UnaryKind::tanh, x); }
inline Tensor gelu(const Tensor& x) { return unary(UnaryKind::gelu, x); }
inline Tensor negate(const Tensor& x) { return unary(UnaryKind::negate, x); }

/// Elementwise with trailing-aligned broadcasting.
Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) {
  return binary(BinaryKind::add, a, b);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(BinaryKind::sub, a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(BinaryKind::mul, a, b);
}

/// Multiply by a compile-side constant.
Tensor scale(const Tensor& x, double c);

/// Ordered concatenation along `axis`; all other dims must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Contiguous sub-range [start, start+len) along `axis`. Exact inverse of
/// concat on matching bounds.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len);

/// Arithmetic mean along `axis` (the axis is removed).
Tensor reduce_mean(const Tensor& x, std::size_t axis);

/// Sum of all elements -> scalar (rank 0).
Tensor sum(const Tensor& x);

/// Outer product of two equal-length rank-1 tensors -> (n, n).
Tensor outer(const Tensor& u, const Tensor& w);

/// Mean softmax cross-entropy over the rows of logits[B, K] against integer
/// labels. Numerically stable log-sum-exp forward.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace urm::ops
