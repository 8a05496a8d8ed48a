// SPDX-License-Identifier: Apache-2.0
#include "urm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "urm/tape.hpp"

namespace urm::pipeline {

void AnticipationConfig::validate() const {
  if (num_frames == 0) throw ConfigError("anticipation: num_frames must be > 0");
  if (stride_s <= 0) throw ConfigError("anticipation: stride must be > 0");
  if (fps <= 0) throw ConfigError("anticipation: fps must be > 0");
  if (intervals_s.empty())
    throw ConfigError("anticipation: at least one interval required");
  for (std::size_t i = 1; i < intervals_s.size(); ++i)
    if (intervals_s[i] >= intervals_s[i - 1])
      throw ConfigError("anticipation: intervals must be strictly decreasing");
  if (num_frames < intervals_s.size())
    throw ConfigError("anticipation: fewer frames than intervals");
  std::vector<std::size_t> steps = interval_steps();
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i] == steps[i - 1])
      throw ConfigError("anticipation: intervals map to the same frame");
}

std::size_t AnticipationConfig::interval_step(double tau_s) const {
  const double offset = tau_s / stride_s;
  const double rounded = std::round(offset);
  if (std::abs(offset - rounded) > 1e-6 || rounded < 1.0 ||
      rounded > static_cast<double>(num_frames))
    throw ConfigError("anticipation: interval " + std::to_string(tau_s) +
                      "s is not a whole number of strides inside the window");
  return num_frames - static_cast<std::size_t>(rounded);
}

std::vector<std::size_t> AnticipationConfig::interval_steps() const {
  std::vector<std::size_t> out;
  out.reserve(intervals_s.size());
  for (double tau : intervals_s) out.push_back(interval_step(tau));
  return out;
}

std::optional<FramePlan> frame_indices(const AnticipationConfig& cfg,
                                       double t_start_s, double fps,
                                       std::size_t available_frames,
                                       std::string* warning) {
  const double first_time =
      t_start_s - static_cast<double>(cfg.num_frames) * cfg.stride_s;
  if (first_time < -1e-9) {
    if (warning)
      *warning = "segment starts too early: needs frames from " +
                 std::to_string(first_time) + "s";
    return std::nullopt;
  }

  FramePlan plan;
  for (std::size_t k = cfg.num_frames; k >= 1; --k) {
    const double t = t_start_s - static_cast<double>(k) * cfg.stride_s;
    const auto idx = static_cast<std::size_t>(std::llround(t * fps));
    // Anticipation causality: the sampled frame must sit strictly before the
    // action start even after snapping to the frame grid.
    if (static_cast<double>(idx) / fps >= t_start_s - 1e-9) {
      if (warning)
        *warning = "frame grid cannot satisfy causality at t=" +
                   std::to_string(t) + "s";
      return std::nullopt;
    }
    if (idx >= available_frames) {
      if (warning)
        *warning = "segment too short: needs frame " + std::to_string(idx) +
                   " of " + std::to_string(available_frames);
      return std::nullopt;
    }
    plan.indices.push_back(idx);
  }
  plan.steps = cfg.interval_steps();
  return plan;
}

ClassifierHeads ClassifierHeads::init(std::size_t channels, std::size_t verbs,
                                      std::size_t nouns, std::size_t actions,
                                      HeadSource source, ActionHeadMode mode,
                                      Rng& rng, Precision p) {
  ClassifierHeads h;
  h.verb = nn::LinearParams::init(channels, verbs, true, rng, p);
  h.noun = nn::LinearParams::init(channels, nouns, true, rng, p);
  h.action = nn::LinearParams::init(channels, actions, true, rng, p);
  h.source = source;
  h.action_mode = mode;
  if (mode == ActionHeadMode::compose && actions != verbs * nouns)
    throw ConfigError("compose action head requires actions == verbs * nouns");
  return h;
}

void ClassifierHeads::collect(const std::string& prefix,
                              nn::ParamList& out) const {
  verb.collect(prefix + ".verb", out);
  noun.collect(prefix + ".noun", out);
  if (action_mode == ActionHeadMode::separate)
    action.collect(prefix + ".action", out);
}

nn::ParamList AnticipationModel::parameters() const {
  nn::ParamList out;
  cell.collect("cell", out);
  edges::collect_params(strategy, "edges", out);
  heads.collect("heads", out);
  return out;
}

namespace {

Tensor pooled_row(const Tensor& y) {
  return ops::reshape(ops::reduce_mean(y, 0), {1, y.shape()[1]});
}

}  // namespace

IntervalLogits readout_logits(const AnticipationModel& model,
                              const cell::StepReadout& step) {
  const ClassifierHeads& heads = model.heads;
  const Tensor pooled = pooled_row(step.y);
  IntervalLogits out;
  if (heads.source == HeadSource::cls_tokens) {
    if (!step.cls)
      throw ContractError("cls_tokens head source without class tokens");
    const auto& ctp = std::get<edges::CtpParams>(model.strategy);
    const Tensor verb_row = ops::slice(*step.cls, 0, 0, 1);
    const Tensor noun_row = ctp.variant == edges::CtpVariant::global
                                ? verb_row
                                : ops::slice(*step.cls, 0, 1, 1);
    out.verb = nn::linear(heads.verb, verb_row);
    out.noun = nn::linear(heads.noun, noun_row);
  } else {
    out.verb = nn::linear(heads.verb, pooled);
    out.noun = nn::linear(heads.noun, pooled);
  }
  if (heads.action_mode == ActionHeadMode::separate)
    out.action = nn::linear(heads.action, pooled);
  return out;
}

std::optional<std::vector<IntervalLogits>> forward_segment(
    const AnticipationModel& model, const data::Segment& segment,
    const AnticipationConfig& cfg, std::string* warning) {
  const auto plan =
      frame_indices(cfg, segment.t_start_s, cfg.fps, segment.frames.size(),
                    warning);
  if (!plan) return std::nullopt;

  const Precision p = model.precision();
  std::vector<Tensor> window;
  window.reserve(plan->indices.size());
  for (std::size_t idx : plan->indices) {
    const Tensor& f = segment.frames[idx];
    window.push_back(f.precision() == p ? f : f.cast(p));
  }

  const std::set<std::size_t> readout_steps(plan->steps.begin(),
                                            plan->steps.end());
  const auto readouts = cell::run_sequence(model.cell, model.strategy, window,
                                           readout_steps);

  std::map<std::size_t, const cell::StepReadout*> by_step;
  for (const auto& r : readouts) by_step[r.step] = &r;

  std::vector<IntervalLogits> out;
  out.reserve(plan->steps.size());
  for (std::size_t s : plan->steps)
    out.push_back(readout_logits(model, *by_step.at(s)));
  return out;
}

Tensor anticipation_loss(const std::vector<std::vector<IntervalLogits>>& batch,
                         std::span<const data::Labels> labels) {
  if (batch.empty()) throw ContractError("anticipation_loss: empty batch");
  if (batch.size() != labels.size())
    throw ShapeError("anticipation_loss: " + std::to_string(batch.size()) +
                     " logit sets vs " + std::to_string(labels.size()) +
                     " labels");
  const std::size_t intervals = batch[0].size();
  std::vector<int> verb_lab(labels.size()), noun_lab(labels.size()),
      act_lab(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    verb_lab[b] = labels[b].verb;
    noun_lab[b] = labels[b].noun;
    act_lab[b] = labels[b].action;
  }

  Tensor total;
  for (std::size_t i = 0; i < intervals; ++i) {
    std::vector<Tensor> vr, nr, ar;
    for (const auto& seg : batch) {
      vr.push_back(seg[i].verb);
      nr.push_back(seg[i].noun);
      if (seg[i].action.defined()) ar.push_back(seg[i].action);
    }
    auto stack = [](std::vector<Tensor>& rows) {
      return rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
    };
    Tensor li = ops::add(ops::cross_entropy(stack(vr), verb_lab),
                         ops::cross_entropy(stack(nr), noun_lab));
    if (!ar.empty())
      li = ops::add(li, ops::cross_entropy(stack(ar), act_lab));
    total = total.defined() ? ops::add(total, li) : li;
  }
  return total;
}

double topk_accuracy(const ScoreMatrix& scores, std::span<const int> labels,
                     std::size_t k) {
  if (k < 1 || k > scores.cols)
    throw ContractError("topk_accuracy: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(scores.cols) + "]");
  if (labels.size() != scores.rows)
    throw ShapeError("topk_accuracy: label count mismatch");
  if (scores.rows == 0) throw ContractError("topk_accuracy: no samples");

  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    const double sy = scores.at(r, y);
    // Rank of the label under (score desc, class index asc) ordering.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      if (c == y) continue;
      const double sc = scores.at(r, c);
      if (sc > sy || (sc == sy && c < y)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

double mean_topk_recall(const ScoreMatrix& scores, std::span<const int> labels,
                        std::size_t k) {
  if (k < 1 || k > scores.cols)
    throw ContractError("mean_topk_recall: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(scores.cols) + "]");
  if (labels.size() != scores.rows)
    throw ShapeError("mean_topk_recall: label count mismatch");
  if (scores.rows == 0)
    throw ContractError("mean_topk_recall: no classes present");

  std::vector<std::size_t> instances(scores.cols, 0), hits(scores.cols, 0);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    ++instances[y];
    const double sy = scores.at(r, y);
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      if (c == y) continue;
      const double sc = scores.at(r, c);
      if (sc > sy || (sc == sy && c < y)) ++ahead;
    }
    if (ahead < k) ++hits[y];
  }
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < scores.cols; ++c) {
    if (instances[c] == 0) continue;
    ++classes;
    total += static_cast<double>(hits[c]) / static_cast<double>(instances[c]);
  }
  return total / static_cast<double>(classes);
}

namespace {

void logits_into_row(const Tensor& logits, ScoreMatrix& m, std::size_t row) {
  for (std::size_t c = 0; c < m.cols; ++c) m.at(row, c) = logits.at(c);
}

/// log-softmax of one (1, K) logits row as plain doubles.
std::vector<double> log_probs(const Tensor& logits) {
  const std::size_t k = logits.numel();
  std::vector<double> out(k);
  double mx = logits.at(0);
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits.at(i));
  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) denom += std::exp(logits.at(i) - mx);
  const double lse = mx + std::log(denom);
  for (std::size_t i = 0; i < k; ++i) out[i] = logits.at(i) - lse;
  return out;
}

}  // namespace

EvalReport evaluate(const AnticipationModel& model,
                    std::span<const data::Segment> segments,
                    const AnticipationConfig& cfg) {
  const std::size_t n_int = cfg.intervals_s.size();
  const std::size_t nv = model.heads.verb_classes();
  const std::size_t nn_ = model.heads.noun_classes();
  const std::size_t na = model.heads.action_classes();

  std::vector<std::vector<IntervalLogits>> all;
  std::vector<data::Labels> labels;
  std::size_t skipped = 0;
  for (const data::Segment& seg : segments) {
    auto logits = forward_segment(model, seg, cfg);
    if (!logits) {
      ++skipped;
      continue;
    }
    all.push_back(std::move(*logits));
    labels.push_back(seg.labels);
  }

  EvalReport rep;
  rep.intervals = cfg.intervals_s;
  rep.samples = all.size();
  rep.skipped = skipped;
  if (all.empty()) {
    rep.per_interval.assign(n_int, IntervalMetrics{});
    return rep;
  }

  std::vector<int> verb_lab, noun_lab, act_lab;
  for (const auto& l : labels) {
    verb_lab.push_back(l.verb);
    noun_lab.push_back(l.noun);
    act_lab.push_back(l.action);
  }

  for (std::size_t i = 0; i < n_int; ++i) {
    ScoreMatrix sv(all.size(), nv), sn(all.size(), nn_), sa(all.size(), na);
    for (std::size_t b = 0; b < all.size(); ++b) {
      logits_into_row(all[b][i].verb, sv, b);
      logits_into_row(all[b][i].noun, sn, b);
      if (model.heads.action_mode == ActionHeadMode::separate) {
        logits_into_row(all[b][i].action, sa, b);
      } else {
        const auto lv = log_probs(all[b][i].verb);
        const auto ln = log_probs(all[b][i].noun);
        for (std::size_t a = 0; a < na; ++a)
          sa.at(b, a) = lv[a / nn_] + ln[a % nn_];
      }
    }
    IntervalMetrics m;
    const std::size_t kv = std::min<std::size_t>(5, nv);
    const std::size_t kn = std::min<std::size_t>(5, nn_);
    const std::size_t ka = std::min<std::size_t>(5, na);
    m.top1_verb = topk_accuracy(sv, verb_lab, 1);
    m.top1_noun = topk_accuracy(sn, noun_lab, 1);
    m.top1_action = topk_accuracy(sa, act_lab, 1);
    m.top5_verb = topk_accuracy(sv, verb_lab, kv);
    m.top5_noun = topk_accuracy(sn, noun_lab, kn);
    m.top5_action = topk_accuracy(sa, act_lab, ka);
    m.mt5r_verb = mean_topk_recall(sv, verb_lab, kv);
    m.mt5r_noun = mean_topk_recall(sn, noun_lab, kn);
    m.mt5r_action = mean_topk_recall(sa, act_lab, ka);
    rep.per_interval.push_back(m);
  }
  return rep;
}

namespace {
const char* kMetricNames[] = {"top1_verb", "top1_noun", "top1_action",
                              "top5_verb", "top5_noun", "top5_action",
                              "mt5r_verb", "mt5r_noun", "mt5r_action"};

std::vector<double> metric_values(const IntervalMetrics& m) {
  return {m.top1_verb, m.top1_noun, m.top1_action,
          m.top5_verb, m.top5_noun, m.top5_action,
          m.mt5r_verb, m.mt5r_noun, m.mt5r_action};
}
}  // namespace

std::string EvalReport::table() const {
  char buf[256];
  std::string out = "interval  ";
  for (const char* name : kMetricNames) {
    std::snprintf(buf, sizeof(buf), "%11s", name);
    out += buf;
  }
  out += '\n';
  for (std::size_t i = 0; i < per_interval.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%8.2f  ", intervals[i]);
    out += buf;
    for (double v : metric_values(per_interval[i])) {
      std::snprintf(buf, sizeof(buf), "%11.4f", v);
      out += buf;
    }
    out += '\n';
  }
  std::snprintf(buf, sizeof(buf), "samples: %zu  skipped: %zu\n", samples,
                skipped);
  out += buf;
  return out;
}

std::string EvalReport::csv() const {
  std::string out = "interval";
  for (const char* name : kMetricNames) out += std::string(",") + name;
  out += '\n';
  char buf[64];
  for (std::size_t i = 0; i < per_interval.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2f", intervals[i]);
    out += buf;
    for (double v : metric_values(per_interval[i])) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

TrainResult train(AnticipationModel& model, Optimizer& opt,
                  std::span<const data::Segment> train_segments,
                  std::span<const data::Segment> val_segments,
                  const OptimizerConfig& ocfg, const AnticipationConfig& acfg,
                  const TrainOptions& opts) {
  if (train_segments.empty()) throw ContractError("train: empty dataset");
  acfg.validate();

  TrainResult res;
  auto log = [&](const std::string& line) {
    res.log.push_back(line);
    if (opts.log_line) opts.log_line(line);
  };

  std::vector<std::size_t> order(train_segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 shuffle_eng(opts.seed ^ 0x5851f42d4c957f2dULL);

  const std::size_t batches =
      (train_segments.size() + ocfg.batch_size - 1) / ocfg.batch_size;
  const std::size_t total_steps = ocfg.epochs * batches;
  std::size_t global_step = 0;
  char buf[160];

  for (std::size_t epoch = 0; epoch < ocfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * ocfg.batch_size;
      const std::size_t hi =
          std::min(lo + ocfg.batch_size, train_segments.size());
      const double lr = scheduled_lr(
          ocfg, static_cast<double>(global_step) /
                    static_cast<double>(std::max<std::size_t>(1, total_steps)));

      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        std::vector<std::vector<IntervalLogits>> batch_logits;
        std::vector<data::Labels> batch_labels;
        for (std::size_t i = lo; i < hi; ++i) {
          const data::Segment& seg = train_segments[order[i]];
          auto logits = forward_segment(model, seg, acfg);
          if (!logits) continue;  // unsampleable segments are dropped
          batch_logits.push_back(std::move(*logits));
          batch_labels.push_back(seg.labels);
        }
        if (batch_logits.empty()) continue;
        loss = anticipation_loss(batch_logits, batch_labels);
      }

      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw DivergenceError(global_step);

      opt.zero_grad();
      backward(loss, tape);
      opt.step(lr);

      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g", epoch, global_step,
                    loss_value, lr);
      log(buf);
      res.final_loss = loss_value;
      ++global_step;
    }

    if (opts.eval_every && !val_segments.empty() &&
        (epoch + 1) % opts.eval_every == 0) {
      const EvalReport rep = evaluate(model, val_segments, acfg);
      for (std::size_t i = 0; i < rep.per_interval.size(); ++i) {
        const auto values = metric_values(rep.per_interval[i]);
        for (std::size_t mi = 0; mi < values.size(); ++mi) {
          std::snprintf(buf, sizeof(buf), "eval,%.2f,%s,%.9g",
                        rep.intervals[i], kMetricNames[mi], values[mi]);
          log(buf);
        }
      }
    }
    if (opts.on_epoch_end) opts.on_epoch_end(epoch);
  }
  res.steps = global_step;
  return res;
}

}  // namespace urm::pipeline
