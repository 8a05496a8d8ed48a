// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "urm/tensor.hpp"

namespace urm {

/// Per-backward-call gradient accumulators keyed by tensor identity. Leaf
/// results are flushed into the persistent Tensor grad buffers at the end of
/// backward(); intermediates live only for the duration of the call, which is
/// what makes repeated backward() calls accumulate correctly on leaves.
using GradBuffers = std::unordered_map<TensorImpl*, Storage>;

/// Ordered record of primitive applications. Ops append nodes while a Tape is
/// active on the current thread; backward() replays them once, in reverse
/// recording order. A tape and the tensors it references are confined to one
/// thread for the duration of a forward/backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(GradBuffers&)>;

  void record(const Tensor& out, BackwardFn fn) {
    nodes_.push_back(Node{out.impl_ptr(), std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Tape currently recording on this thread, or nullptr.
  static Tape* active();

  /// RAII activation. Nested scopes restore the previous tape.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  struct Node {
    std::shared_ptr<TensorImpl> out;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;

  friend void backward(const Tensor& output, Tape& tape);
};

/// Populate gradient buffers of every requires_grad leaf reachable from
/// `output` (a scalar) through the recorded primitives. Repeated calls without
/// zeroing accumulate additively.
void backward(const Tensor& output, Tape& tape);

//
// Helpers for op backward implementations.
//

/// Gradient of `t` accumulated so far in this backward call, or nullptr if no
/// gradient has reached it.
inline const Storage* grad_of(GradBuffers& g, const Tensor& t) {
  auto it = g.find(t.impl());
  return it == g.end() ? nullptr : &it->second;
}

/// Accumulator slot for `t`, zero-initialized on first touch.
inline Storage& grad_slot(GradBuffers& g, const Tensor& t) {
  auto it = g.find(t.impl());
  if (it == g.end())
    it = g.emplace(t.impl(), Storage(t.precision(), t.numel())).first;
  return it->second;
}

}  // namespace urm
