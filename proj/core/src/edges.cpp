// SPDX-License-Identifier: Apache-2.0
#include "urm/edges.hpp"

namespace urm::edges {

TemplateBank TemplateBank::init(std::size_t bank_size, std::size_t n_vertices,
                                std::size_t channels, Rng& rng, Precision p) {
  if (bank_size < 1) throw ContractError("template bank: size must be >= 1");
  TemplateBank tb;
  tb.templates = Tensor::randn({bank_size, n_vertices, n_vertices}, rng, 0.0,
                               0.02, p, true);
  tb.sel1 = nn::LinearParams::init(channels, channels, true, rng, p);
  tb.sel2 = nn::LinearParams::init(channels, bank_size, true, rng, p);
  return tb;
}

void TemplateBank::collect(const std::string& prefix,
                           nn::ParamList& out) const {
  out.emplace_back(prefix + ".templates", templates);
  sel1.collect(prefix + ".sel1", out);
  sel2.collect(prefix + ".sel2", out);
}

CtpParams CtpParams::init(CtpVariant variant, std::size_t n_vertices,
                          std::size_t channels, Rng& rng, Precision p) {
  CtpParams ctp;
  ctp.variant = variant;
  const std::size_t k =
      variant == CtpVariant::global ? 1 : (variant == CtpVariant::vn ? 2 : 3);
  for (std::size_t i = 0; i < k; ++i) {
    TokenProj tp;
    tp.token = Tensor::randn({1, channels}, rng, 0.0, 0.02, p, true);
    tp.proj = nn::LinearParams::init(channels, n_vertices, true, rng, p);
    tp.ln = nn::LayerNormParams::init(n_vertices, p);
    ctp.tokens.push_back(std::move(tp));
  }
  return ctp;
}

namespace {
const char* token_tag(CtpVariant variant, std::size_t i) {
  if (variant == CtpVariant::global) return "global";
  static const char* vna[] = {"verb", "noun", "action"};
  return vna[i];
}
}  // namespace

void CtpParams::collect(const std::string& prefix, nn::ParamList& out) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string tp = prefix + "." + token_tag(variant, i);
    out.emplace_back(tp + ".token", tokens[i].token);
    tokens[i].proj.collect(tp + ".proj", out);
    tokens[i].ln.collect(tp + ".ln", out);
  }
}

void collect_params(const EdgeStrategy& s, const std::string& prefix,
                    nn::ParamList& out) {
  if (const auto* tb = std::get_if<TemplateBank>(&s))
    tb->collect(prefix + ".tb", out);
  else if (const auto* ctp = std::get_if<CtpParams>(&s))
    ctp->collect(prefix + ".ctp", out);
}

Tensor tb_adjacency(const TemplateBank& bank, const Tensor& e_t,
                    Tensor* selector_out) {
  const std::size_t n = bank.vertices();
  if (e_t.rank() != 2 || e_t.shape()[0] != n)
    throw ShapeError("tb_adjacency: vertex features " +
                     shape_str(e_t.shape()) + " do not match template side " +
                     std::to_string(n));
  const std::size_t s = bank.bank_size();

  // Mean over vertex rows -> (1, C), selector MLP -> (1, S), softmax.
  Tensor pooled = ops::reshape(ops::reduce_mean(e_t, 0), {1, e_t.shape()[1]});
  Tensor logits = nn::linear(bank.sel2, ops::gelu(nn::linear(bank.sel1, pooled)));
  Tensor weights = ops::softmax(logits, 1);
  if (selector_out) *selector_out = ops::reshape(weights, {s});

  // Weighted sum over templates as a (1, S) x (S, N*N) product.
  Tensor flat = ops::reshape(bank.templates, {s, n * n});
  return ops::reshape(ops::matmul(weights, flat), {n, n});
}

namespace {
/// Project one token row to a length-N vector: LN(proj(token)).
Tensor project_token(const CtpParams::TokenProj& tp, const Tensor& row) {
  const std::size_t n = tp.proj.out_width();
  Tensor v = nn::layer_norm(tp.ln, nn::linear(tp.proj, row));
  return ops::reshape(v, {n});
}
}  // namespace

Tensor ctp_adjacency(const CtpParams& ctp, const Tensor& cls_state,
                     std::vector<Tensor>* projections_out) {
  const std::size_t k = ctp.token_count();
  if (cls_state.rank() != 2 || cls_state.shape()[0] != k)
    throw ShapeError("ctp_adjacency: token state " +
                     shape_str(cls_state.shape()) + " must have " +
                     std::to_string(k) + " rows");

  std::vector<Tensor> proj;
  proj.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    proj.push_back(
        project_token(ctp.tokens[i], ops::slice(cls_state, 0, i, 1)));
  if (projections_out) *projections_out = proj;

  switch (ctp.variant) {
    case CtpVariant::global:
      return ops::outer(proj[0], proj[0]);
    case CtpVariant::vn:
      return ops::outer(proj[0], proj[1]);
    case CtpVariant::vna:
    default:
      return ops::add(ops::outer(proj[0], proj[1]),
                      ops::outer(proj[2], proj[2]));
  }
}

std::optional<Tensor> adjacency_for_step(
    const EdgeStrategy& s, const Tensor& e_t,
    const std::optional<Tensor>& cls_state, Tensor* selector_out,
    std::vector<Tensor>* projections_out) {
  if (std::holds_alternative<Implicit>(s)) return std::nullopt;
  if (const auto* tb = std::get_if<TemplateBank>(&s))
    return tb_adjacency(*tb, e_t, selector_out);
  const auto& ctp = std::get<CtpParams>(s);
  if (!cls_state)
    throw ContractError(
        "adjacency_for_step: CTP strategy requires a class-token state");
  return ctp_adjacency(ctp, *cls_state, projections_out);
}

std::optional<Tensor> initial_cls_state(const EdgeStrategy& s) {
  const auto* ctp = std::get_if<CtpParams>(&s);
  if (!ctp) return std::nullopt;
  std::vector<Tensor> rows;
  rows.reserve(ctp->tokens.size());
  for (const auto& tp : ctp->tokens) rows.push_back(tp.token);
  return rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
}

}  // namespace urm::edges
