// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urm/config.hpp"

namespace urm {

/// Construct the full model (cell, edge strategy, heads) from a validated
/// configuration. All parameter initialization draws from `rng` in a fixed
/// order, so equal seeds give bit-identical models.
pipeline::AnticipationModel build_model(const RunConfig& cfg, Rng& rng);

}  // namespace urm
