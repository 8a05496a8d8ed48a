// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "urm/data.hpp"
#include "urm/optimizer.hpp"
#include "urm/pipeline.hpp"

namespace urm {

enum class EdgeKind { implicit, tb, ctp };

/// How the classifier input source is chosen: derived from the edge strategy
/// (cls_tokens for CTP, mean_pool otherwise) or forced explicitly.
enum class HeadSourceChoice { auto_select, mean_pool, cls_tokens };

/// Full run configuration, parseable from and serializable to the flat
/// `key = value` text format losslessly. Unknown keys are rejected.
struct RunConfig {
  // global
  std::uint64_t seed = 42;
  bool deterministic = false;
  Precision precision = Precision::f32;

  // model
  std::size_t n = 16;     // vertices
  std::size_t c = 32;     // cell channel width
  std::size_t c_in = 32;  // backbone feature width
  std::size_t heads = 4;
  nn::ScaleMode scale_mode = nn::ScaleMode::input_dim;
  cell::UpdateTake update_take = cell::UpdateTake::message_half;
  EdgeKind strategy = EdgeKind::implicit;
  std::size_t bank_size = 512;
  edges::CtpVariant ctp_variant = edges::CtpVariant::vn;
  HeadSourceChoice classifier_source = HeadSourceChoice::auto_select;
  std::size_t verb_classes = 5;
  std::size_t noun_classes = 5;
  std::size_t action_classes = 25;

  // pipeline
  pipeline::ActionHeadMode action_head = pipeline::ActionHeadMode::separate;
  pipeline::AnticipationConfig anticipation;

  // optimizer / training
  OptimizerConfig optimizer;
  double val_fraction = 0.0;
  std::size_t eval_every = 1;
  std::size_t checkpoint_every = 0;  // steps between periodic saves; 0 = final only

  // data generation
  data::SyntheticConfig data;
  std::size_t data_count = 1200;

  // paths
  std::string features_path = "data.urmf";
  std::string annotations_path = "";  // empty -> features_path + ".ann"
  std::string checkpoint_path = "model.urm";
  std::string log_path = "";  // empty -> stdout only

  bool operator==(const RunConfig&) const = default;

  std::string resolved_annotations_path() const {
    return annotations_path.empty() ? features_path + ".ann"
                                    : annotations_path;
  }

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string serialize() const;
  void validate() const;
};

}  // namespace urm
