// SPDX-License-Identifier: Apache-2.0
#include "urm/tape.hpp"

namespace urm {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Scope::~Scope() { g_active_tape = prev_; }

void backward(const Tensor& output, Tape& tape) {
  if (!output.defined() || output.numel() != 1)
    throw ContractError("backward requires a scalar output");

  GradBuffers grads;
  Storage seed(output.precision(), 1);
  seed.set(0, 1.0);
  grads.emplace(output.impl(), std::move(seed));

  // Reverse recording order; each node is visited exactly once. Nodes whose
  // output received no gradient are left untouched by their backward rule.
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it)
    it->backward(grads);

  // Flush leaves into persistent grad buffers. Each leaf receives exactly one
  // accumulation per backward call, so map order does not affect the result.
  for (auto& entry : grads) {
    TensorImpl* impl = entry.first;
    const Storage& st = entry.second;
    if (!impl->requires_grad || impl->from_op) continue;
    if (!impl->grad)
      impl->grad = std::make_unique<Storage>(st.precision(), st.size());
    dispatch(st.precision(), [&](auto tag) {
      using T = decltype(tag);
      T* dst = impl->grad->data<T>();
      const T* src = st.data<T>();
      for (std::size_t k = 0; k < st.size(); ++k) dst[k] += src[k];
    });
  }
}

}  // namespace urm
