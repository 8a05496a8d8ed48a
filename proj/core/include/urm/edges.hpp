// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "urm/nn.hpp"

namespace urm::edges {

/// No explicit edges: attention falls back to the query-key similarity alone.
struct Implicit {};

/// Learnable bank of (N, N) adjacency templates, soft-selected per frame by a
/// softmax over an MLP of the mean-pooled vertex features.
struct TemplateBank {
  Tensor templates;       // (S, N, N)
  nn::LinearParams sel1;  // C -> C
  nn::LinearParams sel2;  // C -> S

  std::size_t bank_size() const { return templates.shape()[0]; }
  std::size_t vertices() const { return templates.shape()[1]; }

  static TemplateBank init(std::size_t bank_size, std::size_t n_vertices,
                           std::size_t channels, Rng& rng, Precision p);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Which class tokens span the adjacency: one global token (P x P), separate
/// verb/noun tokens (V x N), or verb/noun plus an action token (V x N + A x A).
enum class CtpVariant { global, vn, vna };

/// Adjacency as the outer product of projected, layer-normalized class tokens.
struct CtpParams {
  struct TokenProj {
    Tensor token;            // (1, C) learnable initial token
    nn::LinearParams proj;   // C -> N
    nn::LayerNormParams ln;  // width N
  };

  CtpVariant variant = CtpVariant::vn;
  std::vector<TokenProj> tokens;  // 1 (global), 2 (vn) or 3 (vna)

  std::size_t token_count() const { return tokens.size(); }

  static CtpParams init(CtpVariant variant, std::size_t n_vertices,
                        std::size_t channels, Rng& rng, Precision p);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Exactly one edge-learning mode is active per model instance.
using EdgeStrategy = std::variant<Implicit, TemplateBank, CtpParams>;

inline bool is_implicit(const EdgeStrategy& s) {
  return std::holds_alternative<Implicit>(s);
}
inline bool is_ctp(const EdgeStrategy& s) {
  return std::holds_alternative<CtpParams>(s);
}

void collect_params(const EdgeStrategy& s, const std::string& prefix,
                    nn::ParamList& out);

/// Soft-selected template mixture for the current frame's vertex features
/// e_t (N, C). Optionally emits the selection weights (S).
Tensor tb_adjacency(const TemplateBank& bank, const Tensor& e_t,
                    Tensor* selector_out = nullptr);

/// Outer-product adjacency from the current class-token rows (k, C).
/// Optionally emits the projected per-token vectors (each length N).
Tensor ctp_adjacency(const CtpParams& ctp, const Tensor& cls_state,
                     std::vector<Tensor>* projections_out = nullptr);

/// Per-step adjacency dispatch: nothing for Implicit, the template mixture
/// for TB, the token outer product for CTP. cls_state must be present exactly
/// for the CTP variant.
std::optional<Tensor> adjacency_for_step(
    const EdgeStrategy& s, const Tensor& e_t,
    const std::optional<Tensor>& cls_state, Tensor* selector_out = nullptr,
    std::vector<Tensor>* projections_out = nullptr);

/// Learnable initial token rows (k, C) for CTP; nullopt otherwise.
std::optional<Tensor> initial_cls_state(const EdgeStrategy& s);

}  // namespace urm::edges
