// SPDX-License-Identifier: Apache-2.0
#include "urm/cell.hpp"

namespace urm::cell {

CellParams CellParams::init(std::size_t n_vertices, std::size_t c_in,
                            std::size_t channels, std::size_t n_heads,
                            nn::ScaleMode mode, Rng& rng, Precision p) {
  CellParams cp;
  cp.message_mlp = nn::LinearParams::init(c_in, channels, true, rng, p);
  cp.w_pe = Tensor::randn({n_vertices, channels}, rng, 0.0, 0.02, p, true);
  cp.fuse = nn::LinearParams::init(2 * channels, channels, true, rng, p);
  cp.msg_block = nn::SABlockParams::init(channels, n_heads, mode, rng, p);
  cp.upd_block = nn::SABlockParams::init(channels, n_heads, mode, rng, p);
  cp.readout_block = nn::SABlockParams::init(channels, n_heads, mode, rng, p);
  cp.readout_proj = nn::LinearParams::init(channels, channels, true, rng, p);
  return cp;
}

void CellParams::collect(const std::string& prefix, nn::ParamList& out) const {
  message_mlp.collect(prefix + ".msg_mlp", out);
  out.emplace_back(prefix + ".w_pe", w_pe);
  fuse.collect(prefix + ".fuse", out);
  msg_block.collect(prefix + ".msg_block", out);
  upd_block.collect(prefix + ".upd_block", out);
  readout_block.collect(prefix + ".readout_block", out);
  readout_proj.collect(prefix + ".readout_proj", out);
}

std::size_t CellParams::budget_param_count() const {
  nn::ParamList all;
  collect("cell", all);
  std::size_t n = 0;
  for (const auto& [name, t] : all)
    if (name != "cell.w_pe") n += t.numel();
  return n;
}

Tensor encode_vertices(const CellParams& p, const Tensor& x_t) {
  if (x_t.rank() != 2 || x_t.shape()[0] != p.vertices())
    throw ShapeError("encode_vertices: frame " + shape_str(x_t.shape()) +
                     " does not match position encoding for " +
                     std::to_string(p.vertices()) + " vertices");
  const Tensor xb = nn::linear(p.message_mlp, x_t);
  return ops::add(ops::mul(ops::sigmoid(xb), xb), p.w_pe);
}

Tensor message_step(const CellParams& p, const Tensor& e_t,
                    const Tensor& h_prev,
                    const std::optional<Tensor>& adjacency) {
  const Tensor fused = nn::linear(p.fuse, ops::concat({e_t, h_prev}, 1));
  return nn::sablock(p.msg_block, fused, adjacency);
}

Tensor update_step(const CellParams& p, const Tensor& e_t, const Tensor& m_t) {
  const std::size_t n = p.vertices();
  const Tensor stacked = ops::concat({e_t, m_t}, 0);  // (2N, C)
  const Tensor u_full = nn::sablock(p.upd_block, stacked);
  const Tensor u = p.update_take == UpdateTake::message_half
                       ? ops::slice(u_full, 0, n, n)
                       : ops::slice(u_full, 0, 0, n);
  return ops::tanh(u);
}

std::pair<Tensor, std::optional<Tensor>> readout(
    const CellParams& p, const Tensor& h_t,
    const std::optional<Tensor>& cls_tokens) {
  // The decode projection applies to the graph state only; token rows enter
  // the block unprojected.
  const Tensor z = nn::linear(p.readout_proj, h_t);
  if (!cls_tokens) return {nn::sablock(p.readout_block, z), std::nullopt};

  const std::size_t k = cls_tokens->shape()[0];
  const Tensor out = nn::sablock(p.readout_block,
                                 ops::concat({*cls_tokens, z}, 0));
  return {ops::slice(out, 0, k, p.vertices()), ops::slice(out, 0, 0, k)};
}

std::vector<StepReadout> run_sequence(const CellParams& p,
                                      const edges::EdgeStrategy& strategy,
                                      std::span<const Tensor> frames,
                                      const std::set<std::size_t>& readout_steps,
                                      SequenceTrace* trace) {
  if (frames.empty()) throw ContractError("run_sequence: no frames");
  for (std::size_t s : readout_steps)
    if (s >= frames.size())
      throw ContractError("run_sequence: readout step " + std::to_string(s) +
                          " out of range for " +
                          std::to_string(frames.size()) + " frames");

  const bool ctp = edges::is_ctp(strategy);
  Tensor h = Tensor::zeros({p.vertices(), p.channels()},
                           p.w_pe.precision());
  std::optional<Tensor> cls_state = edges::initial_cls_state(strategy);

  std::vector<StepReadout> outputs;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Tensor e = encode_vertices(p, frames[t]);

    Tensor selector;
    std::vector<Tensor> projections;
    const std::optional<Tensor> adjacency = edges::adjacency_for_step(
        strategy, e, cls_state, &selector, &projections);
    if (trace) {
      trace->adjacency.push_back(adjacency);
      trace->selector.push_back(selector.defined()
                                    ? std::optional<Tensor>(selector)
                                    : std::nullopt);
      trace->cls_tokens_in.push_back(cls_state);
      trace->projections.push_back(projections);
    }

    const Tensor m = message_step(p, e, h, adjacency);
    h = update_step(p, e, m);

    const bool wanted = readout_steps.count(t) > 0;
    if (wanted || ctp) {
      auto [y, cls_out] = readout(p, h, cls_state);
      if (ctp) cls_state = cls_out;
      if (wanted) outputs.push_back(StepReadout{t, y, cls_out});
    }
  }
  return outputs;
}

}  // namespace urm::cell
