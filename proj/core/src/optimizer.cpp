// SPDX-License-Identifier: Apache-2.0
#include "urm/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace urm {

double scheduled_lr(const OptimizerConfig& cfg, double progress) {
  const double start = 1.0 - cfg.cosine_fraction;
  if (cfg.cosine_fraction <= 0.0 || progress <= start) return cfg.lr;
  const double p = std::min(1.0, (progress - start) / cfg.cosine_fraction);
  return cfg.lr_min +
         0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

Optimizer::Optimizer(OptimizerConfig cfg, const nn::ParamList& params)
    : cfg_(cfg), params_(params) {
  for (const auto& [name, t] : params_) {
    slot_m_.emplace_back(t.precision(), t.numel());
    if (cfg_.kind == OptKind::adam)
      slot_v_.emplace_back(t.precision(), t.numel());
  }
}

void Optimizer::step(double lr) {
  ++steps_;
  const double bc1 =
      1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 =
      1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));

  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& t = params_[pi].second;
    if (!t.has_grad()) continue;
    const std::size_t n = t.numel();
    dispatch(t.precision(), [&](auto tag) {
      using T = decltype(tag);
      T* w = t.mutable_data<T>();
      const T* g = t.grad().data<T>();
      T* m = slot_m_[pi].data<T>();
      if (cfg_.kind == OptKind::sgd) {
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = static_cast<T>(cfg_.momentum) * m[i] + g[i];
          w[i] -= static_cast<T>(lr) * m[i] +
                  static_cast<T>(lr * cfg_.weight_decay) * w[i];
        }
      } else {
        T* v = slot_v_[pi].data<T>();
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = static_cast<T>(cfg_.beta1) * m[i] +
                 static_cast<T>(1.0 - cfg_.beta1) * g[i];
          v[i] = static_cast<T>(cfg_.beta2) * v[i] +
                 static_cast<T>(1.0 - cfg_.beta2) * g[i] * g[i];
          const double mhat = static_cast<double>(m[i]) / bc1;
          const double vhat = static_cast<double>(v[i]) / bc2;
          w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps)) +
                  static_cast<T>(lr * cfg_.weight_decay) * w[i];
        }
      }
    });
  }
}

void Optimizer::zero_grad() { nn::zero_grads(params_); }

nn::ParamList Optimizer::state() const {
  nn::ParamList out;
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    const auto& [name, t] = params_[pi];
    Tensor m = Tensor::zeros(t.shape(), t.precision());
    m.mutable_storage() = slot_m_[pi];
    out.emplace_back("opt.m." + name, m);
    if (cfg_.kind == OptKind::adam) {
      Tensor v = Tensor::zeros(t.shape(), t.precision());
      v.mutable_storage() = slot_v_[pi];
      out.emplace_back("opt.v." + name, v);
    }
  }
  return out;
}

void Optimizer::load_state(const std::map<std::string, Tensor>& named) {
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    const std::string& name = params_[pi].first;
    if (auto it = named.find("opt.m." + name); it != named.end())
      slot_m_[pi] = it->second.storage();
    if (cfg_.kind == OptKind::adam) {
      if (auto it = named.find("opt.v." + name); it != named.end())
        slot_v_[pi] = it->second.storage();
    }
  }
}

}  // namespace urm
