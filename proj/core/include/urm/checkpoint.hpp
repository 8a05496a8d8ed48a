// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "urm/pipeline.hpp"

namespace urm {

/// Persisted training state. Binary layout: magic "URM1", u32 format version,
/// u32 config-text length + bytes, u64 step counter, u32 tensor count, then
/// per tensor: name (u16 length + bytes), dtype u8 (0 = f32, 1 = f64), rank
/// u8, dims (u32 each), payload little-endian. Optimizer state rides along as
/// `opt.`-prefixed tensors.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);

/// Parse a checkpoint file; malformed bytes raise ParseError with the
/// offending byte offset.
Checkpoint load_checkpoint(const std::string& path);

std::map<std::string, Tensor> tensor_map(const Checkpoint& ck);

/// Copy checkpoint tensors into the model parameters by name. A missing
/// parameter, a mismatched shape, or a mismatched dtype is a hard error.
/// Unrecognized non-`opt.` tensors are errors too.
void apply_checkpoint(pipeline::AnticipationModel& model, const Checkpoint& ck);

}  // namespace urm
