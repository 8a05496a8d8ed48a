// SPDX-License-Identifier: Apache-2.0
#include "urm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "urm/tape.hpp"

namespace urm {

GradCheckReport grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& leaves, double eps) {
  for (const auto& [name, leaf] : leaves) {
    if (leaf.precision() != Precision::f64)
      throw ContractError("grad_check: leaf '" + name + "' must be f64");
    if (!leaf.requires_grad())
      throw ContractError("grad_check: leaf '" + name +
                          "' does not require grad");
  }

  // Two tape-free evaluations must agree bitwise, otherwise the central
  // differences below are meaningless.
  const Tensor probe1 = f();
  const Tensor probe2 = f();
  if (probe1.numel() != 1)
    throw ContractError("grad_check: f must produce a scalar");
  if (!(probe1.storage() == probe2.storage()))
    throw ContractError("grad_check: f is not deterministic");

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    for (auto& [name, leaf] : leaves) {
      Tensor l = leaf;
      l.zero_grad();
    }
    Tape tape;
    Tensor out;
    {
      Tape::Scope scope(tape);
      out = f();
    }
    backward(out, tape);
    for (const auto& [name, leaf] : leaves) {
      std::vector<double> g(leaf.numel(), 0.0);
      if (leaf.has_grad())
        for (std::size_t i = 0; i < leaf.numel(); ++i)
          g[i] = leaf.grad().get(i);
      analytic.push_back(std::move(g));
    }
  }

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li].second;
    double* data = leaf.mutable_data<double>();
    double worst = 0.0;
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = f().item();
      data[i] = saved - eps;
      const double down = f().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
    report.per_leaf.emplace_back(leaves[li].first, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }

  // Leave leaves clean for callers that go on to train.
  for (auto& [name, leaf] : leaves) {
    Tensor l = leaf;
    l.zero_grad();
  }
  return report;
}

}  // namespace urm
