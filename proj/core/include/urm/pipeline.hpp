// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urm/cell.hpp"
#include "urm/data.hpp"
#include "urm/optimizer.hpp"

namespace urm::pipeline {

/// Frame sampling and anticipation-interval protocol: a fixed number of
/// observed frames at a fixed stride strictly before the action start, with
/// predictions issued at each configured interval before it.
struct AnticipationConfig {
  std::size_t num_frames = 14;
  double stride_s = 0.25;
  std::vector<double> intervals_s = {2.00, 1.75, 1.50, 1.25,
                                     1.00, 0.75, 0.50, 0.25};
  double fps = 4.0;

  bool operator==(const AnticipationConfig&) const = default;

  void validate() const;
  /// Observation-step index answering interval tau (the step whose frame
  /// time is t_start - tau).
  std::size_t interval_step(double tau_s) const;
  std::vector<std::size_t> interval_steps() const;
};

struct FramePlan {
  std::vector<std::size_t> indices;  // frame indices, ascending time
  std::vector<std::size_t> steps;    // per interval: index into the window
};

/// Frame indices for a segment starting at t_start_s, or nullopt with a
/// warning when the segment sits too early in the recording (or the stream is
/// too short) to sample the full window.
std::optional<FramePlan> frame_indices(const AnticipationConfig& cfg,
                                       double t_start_s,
                                       double fps,
                                       std::size_t available_frames,
                                       std::string* warning = nullptr);

enum class HeadSource { mean_pool, cls_tokens };
enum class ActionHeadMode { separate, compose };

/// Task heads over the readout. mean_pool feeds all three heads the
/// vertex-mean of y_t; cls_tokens (CTP mode) feeds verb/noun heads their
/// token rows while the action head keeps the pooled input.
struct ClassifierHeads {
  nn::LinearParams verb, noun, action;
  HeadSource source = HeadSource::mean_pool;
  ActionHeadMode action_mode = ActionHeadMode::separate;

  std::size_t verb_classes() const { return verb.out_width(); }
  std::size_t noun_classes() const { return noun.out_width(); }
  std::size_t action_classes() const { return action.out_width(); }

  static ClassifierHeads init(std::size_t channels, std::size_t verbs,
                              std::size_t nouns, std::size_t actions,
                              HeadSource source, ActionHeadMode mode, Rng& rng,
                              Precision p);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// The full trainable bundle: recurrent cell, edge strategy, task heads.
struct AnticipationModel {
  cell::CellParams cell;
  edges::EdgeStrategy strategy;
  ClassifierHeads heads;

  Precision precision() const { return cell.w_pe.precision(); }
  nn::ParamList parameters() const;
};

struct IntervalLogits {
  Tensor verb, noun, action;  // each (1, classes); action undefined in
                              // compose mode (derived from verb/noun at eval)
};

/// Task logits for one readout step (pooled y_t and, in CTP mode, the class
/// token rows).
IntervalLogits readout_logits(const AnticipationModel& model,
                              const cell::StepReadout& step);

/// Run the model over one segment's sampled window and produce logits at
/// every configured interval. nullopt (with warning) when the segment cannot
/// be sampled.
std::optional<std::vector<IntervalLogits>> forward_segment(
    const AnticipationModel& model, const data::Segment& segment,
    const AnticipationConfig& cfg, std::string* warning = nullptr);

/// Summed cross-entropy over all intervals and tasks; each CE is averaged
/// over the batch. batch[i] holds segment i's per-interval logits.
Tensor anticipation_loss(const std::vector<std::vector<IntervalLogits>>& batch,
                         std::span<const data::Labels> labels);

//
// Metrics.
//

struct ScoreMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;  // row-major

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

/// Fraction of samples whose label ranks in the k best scores. Ties resolve
/// toward the lower class index.
double topk_accuracy(const ScoreMatrix& scores, std::span<const int> labels,
                     std::size_t k);

/// Mean over classes (with at least one instance) of per-class top-k recall.
double mean_topk_recall(const ScoreMatrix& scores, std::span<const int> labels,
                        std::size_t k);

struct IntervalMetrics {
  double top1_verb = 0, top1_noun = 0, top1_action = 0;
  double top5_verb = 0, top5_noun = 0, top5_action = 0;
  double mt5r_verb = 0, mt5r_noun = 0, mt5r_action = 0;
};

struct EvalReport {
  std::vector<double> intervals;
  std::vector<IntervalMetrics> per_interval;
  std::size_t samples = 0;
  std::size_t skipped = 0;

  std::string table() const;
  std::string csv() const;
};

EvalReport evaluate(const AnticipationModel& model,
                    std::span<const data::Segment> segments,
                    const AnticipationConfig& cfg);

//
// Training.
//

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;       // epochs between val evaluations; 0 = off
  std::function<void(const std::string&)> log_line;  // optional sink
  std::function<void(std::size_t epoch)> on_epoch_end;  // optional hook
};

/// Raised when the loss stops being finite.
struct DivergenceError : Error {
  std::size_t step;
  explicit DivergenceError(std::size_t at_step)
      : Error("training diverged (non-finite loss) at step " +
              std::to_string(at_step)),
        step(at_step) {}
};

struct TrainResult {
  double final_loss = 0.0;
  std::size_t steps = 0;
  std::vector<std::string> log;
};

/// Mini-batch gradient descent over the summed-interval loss with the
/// configured optimizer and cosine-annealed tail. Emits `epoch,step,loss,lr`
/// lines plus per-epoch `eval,<interval>,<metric>,<value>` records.
TrainResult train(AnticipationModel& model, Optimizer& opt,
                  std::span<const data::Segment> train_segments,
                  std::span<const data::Segment> val_segments,
                  const OptimizerConfig& ocfg, const AnticipationConfig& acfg,
                  const TrainOptions& opts);

}  // namespace urm::pipeline
