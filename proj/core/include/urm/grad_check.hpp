// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "urm/tensor.hpp"

namespace urm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_leaf;
};

/// Compare tape gradients of the scalar-valued f against central finite
/// differences over every element of every leaf.
///
/// Requirements: all leaves are f64 and requires_grad; f re-reads the leaves
/// on each call and is deterministic (verified by evaluating twice and
/// comparing bit-for-bit). Relative error per element is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& leaves,
    double eps = 1e-5);

}  // namespace urm
