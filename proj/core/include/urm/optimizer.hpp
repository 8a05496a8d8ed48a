// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "urm/nn.hpp"

namespace urm {

enum class OptKind { sgd, adam };

struct OptimizerConfig {
  OptKind kind = OptKind::adam;
  double lr = 1e-4;
  double weight_decay = 0.001;
  double momentum = 0.9;        // sgd
  double beta1 = 0.9;           // adam
  double beta2 = 0.999;         // adam
  double eps = 1e-8;            // adam
  double lr_min = 1e-7;         // cosine floor
  double cosine_fraction = 0.25;  // anneal over this trailing share of epochs
  std::size_t epochs = 20;
  std::size_t batch_size = 32;

  bool operator==(const OptimizerConfig&) const = default;
};

/// Learning rate at normalized training progress in [0, 1]: constant, then
/// cosine-annealed to lr_min over the trailing cosine_fraction.
double scheduled_lr(const OptimizerConfig& cfg, double progress);

/// Momentum SGD or Adam with decoupled weight decay. State buffers are
/// exposed as named tensors (opt.<slot>.<param>) for checkpointing.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const nn::ParamList& params);

  /// Apply one update from the accumulated gradients at the given lr.
  /// Parameters without a gradient buffer are skipped.
  void step(double lr);
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  nn::ParamList state() const;
  void load_state(const std::map<std::string, Tensor>& named);

 private:
  OptimizerConfig cfg_;
  nn::ParamList params_;
  std::vector<Storage> slot_m_;  // momentum / first moment
  std::vector<Storage> slot_v_;  // second moment (adam only)
  std::uint64_t steps_ = 0;
};

}  // namespace urm
