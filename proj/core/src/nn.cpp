// SPDX-License-Identifier: Apache-2.0
#include "urm/nn.hpp"

#include <cmath>

namespace urm::nn {

std::size_t param_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void zero_grads(ParamList& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

LinearParams LinearParams::init(std::size_t in, std::size_t out, bool bias,
                                Rng& rng, Precision p) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearParams lp;
  lp.w = Tensor::rand_uniform({in, out}, rng, -bound, bound, p, true);
  if (bias) lp.b = Tensor::zeros({out}, p, true);
  return lp;
}

void LinearParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".w", w);
  if (b) out.emplace_back(prefix + ".b", *b);
}

Tensor linear(const LinearParams& p, const Tensor& x) {
  if (x.shape().back() != p.in_width())
    throw ShapeError("linear: input width " +
                     std::to_string(x.shape().back()) + " != expected " +
                     std::to_string(p.in_width()));
  Tensor y = ops::matmul(x, p.w);
  if (p.b) y = ops::add(y, *p.b);
  return y;
}

LayerNormParams LayerNormParams::init(std::size_t width, Precision p) {
  LayerNormParams ln;
  ln.gamma = Tensor::full({width}, 1.0, p);
  ln.gamma.set_requires_grad(true);
  ln.beta = Tensor::zeros({width}, p, true);
  return ln;
}

void LayerNormParams::collect(const std::string& prefix,
                              ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

Tensor layer_norm(const LayerNormParams& p, const Tensor& x) {
  return ops::layer_norm(x, p.gamma, p.beta, p.eps);
}

MHSAParams MHSAParams::init(std::size_t channels, std::size_t n_heads,
                            ScaleMode mode, Rng& rng, Precision p) {
  if (n_heads == 0 || channels % n_heads != 0)
    throw ContractError("mhsa: head count " + std::to_string(n_heads) +
                        " must divide channel width " +
                        std::to_string(channels));
  MHSAParams m;
  m.scale_mode = mode;
  const std::size_t head_width = channels / n_heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    AttentionHeadParams head;
    head.q = LinearParams::init(channels, head_width, false, rng, p);
    head.k = LinearParams::init(channels, head_width, false, rng, p);
    head.v = LinearParams::init(channels, head_width, false, rng, p);
    m.heads.push_back(std::move(head));
  }
  m.agg = LinearParams::init(channels, channels, false, rng, p);
  return m;
}

void MHSAParams::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    heads[h].q.collect(hp + ".q", out);
    heads[h].k.collect(hp + ".k", out);
    heads[h].v.collect(hp + ".v", out);
  }
  agg.collect(prefix + ".agg", out);
}

Tensor attention_weights(const AttentionHeadParams& head, const Tensor& x,
                         const std::optional<Tensor>& adjacency,
                         ScaleMode mode) {
  const std::size_t n_tokens = x.shape()[0];
  const Tensor q = linear(head.q, x);
  const Tensor k = linear(head.k, x);
  const double d = mode == ScaleMode::input_dim
                       ? static_cast<double>(x.shape().back())
                       : static_cast<double>(q.shape().back());
  Tensor scores =
      ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(d));
  Tensor weights = ops::softmax(scores, 1);
  if (adjacency) {
    if (adjacency->rank() != 2 || adjacency->shape()[0] != n_tokens ||
        adjacency->shape()[1] != n_tokens)
      throw ShapeError("attention: adjacency " + shape_str(adjacency->shape()) +
                       " does not match token count " +
                       std::to_string(n_tokens));
    weights = ops::add(ops::softmax(*adjacency, 1), weights);
  }
  return weights;
}

Tensor self_attention(const AttentionHeadParams& head, const Tensor& x,
                      const std::optional<Tensor>& adjacency, ScaleMode mode) {
  const Tensor weights = attention_weights(head, x, adjacency, mode);
  return ops::matmul(weights, linear(head.v, x));
}

Tensor mhsa(const MHSAParams& p, const Tensor& x,
            const std::optional<Tensor>& adjacency) {
  std::vector<Tensor> outs;
  outs.reserve(p.heads.size());
  for (const auto& head : p.heads)
    outs.push_back(self_attention(head, x, adjacency, p.scale_mode));
  const Tensor merged = outs.size() == 1 ? outs[0] : ops::concat(outs, 1);
  return linear(p.agg, merged);
}

FFNParams FFNParams::init(std::size_t channels, Rng& rng, Precision p) {
  FFNParams f;
  f.fc1 = LinearParams::init(channels, channels, true, rng, p);
  f.fc2 = LinearParams::init(channels, channels, true, rng, p);
  return f;
}

void FFNParams::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor ffn(const FFNParams& p, const Tensor& x) {
  return linear(p.fc2, ops::gelu(linear(p.fc1, x)));
}

SABlockParams SABlockParams::init(std::size_t channels, std::size_t n_heads,
                                  ScaleMode mode, Rng& rng, Precision p) {
  SABlockParams b;
  b.norm1 = LayerNormParams::init(channels, p);
  b.norm2 = LayerNormParams::init(channels, p);
  b.mhsa = MHSAParams::init(channels, n_heads, mode, rng, p);
  b.ffn = FFNParams::init(channels, rng, p);
  return b;
}

void SABlockParams::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  mhsa.collect(prefix + ".mhsa", out);
  ffn.collect(prefix + ".ffn", out);
}

Tensor sablock(const SABlockParams& p, const Tensor& x,
               const std::optional<Tensor>& adjacency) {
  if (x.shape().back() != p.channels())
    throw ShapeError("sablock: input width " +
                     std::to_string(x.shape().back()) + " != block width " +
                     std::to_string(p.channels()));
  const Tensor y1 = ops::add(x, mhsa(p.mhsa, layer_norm(p.norm1, x), adjacency));
  return ops::add(y1, ffn(p.ffn, layer_norm(p.norm2, y1)));
}

}  // namespace urm::nn
