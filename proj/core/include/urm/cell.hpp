// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "urm/edges.hpp"
#include "urm/nn.hpp"

namespace urm::cell {

/// Which half of the update block's 2N output rows becomes the new state.
enum class UpdateTake { message_half, vertex_half };

/// All parameters of the recurrent cell: gated vertex encoding, hidden-state
/// fusion, and the message / update / readout attention blocks.
struct CellParams {
  nn::LinearParams message_mlp;  // C_in -> C
  Tensor w_pe;                   // (N, C) additive position encoding
  nn::LinearParams fuse;         // 2C -> C
  nn::SABlockParams msg_block, upd_block, readout_block;
  nn::LinearParams readout_proj;  // C -> C
  UpdateTake update_take = UpdateTake::message_half;

  std::size_t vertices() const { return w_pe.shape()[0]; }
  std::size_t channels() const { return w_pe.shape()[1]; }
  std::size_t in_channels() const { return message_mlp.in_width(); }

  static CellParams init(std::size_t n_vertices, std::size_t c_in,
                         std::size_t channels, std::size_t n_heads,
                         nn::ScaleMode mode, Rng& rng, Precision p);
  void collect(const std::string& prefix, nn::ParamList& out) const;

  /// Trainable scalar count excluding the position encoding (which scales
  /// with N, not C).
  std::size_t budget_param_count() const;
};

/// Per-sequence vertex state. h is (N, C); every element lies in (-1, 1)
/// after the first update (post-tanh); the t = 0 state is all zeros.
struct HiddenState {
  Tensor h;
  std::size_t t = 0;
};

/// Gated nonlinear vertex encoding of one frame: sigmoid(x̄) ⊙ x̄ + W_pe with
/// x̄ the message MLP of the raw features. x_t is (N, C_in).
Tensor encode_vertices(const CellParams& p, const Tensor& x_t);

/// Fuse current vertices with the previous state (2C -> C), then run the
/// message block with the optional explicit adjacency.
Tensor message_step(const CellParams& p, const Tensor& e_t,
                    const Tensor& h_prev,
                    const std::optional<Tensor>& adjacency);

/// Stack vertices and messages along the token axis (2N, C), run the update
/// block (no adjacency), take the configured half, squash with tanh.
Tensor update_step(const CellParams& p, const Tensor& e_t, const Tensor& m_t);

/// Decode the state (W_r h + b_r), optionally prepend class-token rows, run
/// the readout block, and split the tokens back off. Returns (y_t, cls_out).
std::pair<Tensor, std::optional<Tensor>> readout(
    const CellParams& p, const Tensor& h_t,
    const std::optional<Tensor>& cls_tokens);

struct StepReadout {
  std::size_t step;
  Tensor y;                   // (N, C)
  std::optional<Tensor> cls;  // (k, C) token rows, CTP only
};

/// Per-step diagnostics captured during run_sequence, for inspection tooling
/// and structural tests. Entries are empty where the mode produces nothing.
struct SequenceTrace {
  std::vector<std::optional<Tensor>> adjacency;      // Â^t fed to the message block
  std::vector<std::optional<Tensor>> selector;       // TB selection weights (S)
  std::vector<std::optional<Tensor>> cls_tokens_in;  // token rows that produced Â^t
  std::vector<std::vector<Tensor>> projections;      // CTP projected vectors
};

/// Step the cell over a frame sequence. Readout outputs are materialized at
/// the requested steps only; in CTP mode the readout block still runs every
/// step to advance the class-token state.
std::vector<StepReadout> run_sequence(const CellParams& p,
                                      const edges::EdgeStrategy& strategy,
                                      std::span<const Tensor> frames,
                                      const std::set<std::size_t>& readout_steps,
                                      SequenceTrace* trace = nullptr);

}  // namespace urm::cell
