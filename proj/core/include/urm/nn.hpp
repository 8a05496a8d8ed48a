// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "urm/ops.hpp"
#include "urm/rng.hpp"

namespace urm::nn {

/// Ordered (name, tensor) pairs; the order is the canonical parameter order
/// used by the optimizer and checkpoints.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

std::size_t param_count(const ParamList& params);
void zero_grads(ParamList& params);

struct LinearParams {
  Tensor w;                 // (in, out)
  std::optional<Tensor> b;  // (out)

  std::size_t in_width() const { return w.shape()[0]; }
  std::size_t out_width() const { return w.shape()[1]; }

  /// Weights ~ uniform(±1/sqrt(in)), biases zero.
  static LinearParams init(std::size_t in, std::size_t out, bool bias,
                           Rng& rng, Precision p);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor linear(const LinearParams& p, const Tensor& x);

struct LayerNormParams {
  Tensor gamma, beta;
  double eps = 1e-5;

  static LayerNormParams init(std::size_t width, Precision p);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor layer_norm(const LayerNormParams& p, const Tensor& x);

/// Attention score scaling: the full input width C (the default, following
/// the definition of the scaled dot-product used here) or the per-head width.
enum class ScaleMode { input_dim, head_dim };

struct AttentionHeadParams {
  LinearParams q, k, v;  // each (C, C/n), no bias
};

struct MHSAParams {
  std::vector<AttentionHeadParams> heads;
  LinearParams agg;  // (C, C), no bias
  ScaleMode scale_mode = ScaleMode::input_dim;

  std::size_t channels() const { return agg.in_width(); }
  std::size_t head_count() const { return heads.size(); }

  static MHSAParams init(std::size_t channels, std::size_t n_heads,
                         ScaleMode mode, Rng& rng, Precision p);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Combined attention weight matrix for one head: softmax of scaled
/// query-key scores, plus softmax(adjacency) when an adjacency is given.
/// Rows sum to 1 (implicit) or 2 (fused). Softmax normalizes the key axis.
Tensor attention_weights(const AttentionHeadParams& head, const Tensor& x,
                         const std::optional<Tensor>& adjacency,
                         ScaleMode mode);

/// One attention head: attention_weights(x, A) times the value projection.
/// x is (N, C); the result is (N, C/n).
Tensor self_attention(const AttentionHeadParams& head, const Tensor& x,
                      const std::optional<Tensor>& adjacency, ScaleMode mode);

/// Heads in parallel on the same input (and the same shared adjacency),
/// concatenated over channels and fused by the aggregation map.
Tensor mhsa(const MHSAParams& p, const Tensor& x,
            const std::optional<Tensor>& adjacency = std::nullopt);

struct FFNParams {
  LinearParams fc1, fc2;  // (C, C) and (C, C), hidden width C, with biases

  static FFNParams init(std::size_t channels, Rng& rng, Precision p);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// gelu(x W1 + b1) W2 + b2.
Tensor ffn(const FFNParams& p, const Tensor& x);

/// Pre-norm residual attention block: MHSA and FFN, each behind a layer norm
/// and a residual connection.
struct SABlockParams {
  LayerNormParams norm1, norm2;
  MHSAParams mhsa;
  FFNParams ffn;

  std::size_t channels() const { return mhsa.channels(); }

  static SABlockParams init(std::size_t channels, std::size_t n_heads,
                            ScaleMode mode, Rng& rng, Precision p);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor sablock(const SABlockParams& p, const Tensor& x,
               const std::optional<Tensor>& adjacency = std::nullopt);

}  // namespace urm::nn
