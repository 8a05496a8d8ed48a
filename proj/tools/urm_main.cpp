// SPDX-License-Identifier: Apache-2.0
//
// Command-line harness: data generation, training, evaluation, gradient
// checking and adjacency inspection over the urm core library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "urm/checkpoint.hpp"
#include "urm/config.hpp"
#include "urm/grad_check.hpp"
#include "urm/model.hpp"

namespace fs = std::filesystem;
using namespace urm;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

RunConfig load_config(const GlobalArgs& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{}
                                        : RunConfig::load(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.deterministic) cfg.deterministic = true;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

void write_csv_matrix(const std::string& path, const Tensor& t) {
  const std::size_t rows = t.rank() == 2 ? t.shape()[0] : 1;
  const std::size_t cols = t.rank() == 2 ? t.shape()[1] : t.numel();
  std::string body;
  char buf[48];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", t.at(r * cols + c));
      body += buf;
      body += c + 1 < cols ? ',' : '\n';
    }
  }
  write_text(path, body);
}

Checkpoint make_checkpoint(const pipeline::AnticipationModel& model,
                           const RunConfig& cfg, const Optimizer& opt) {
  Checkpoint ck;
  ck.config_text = cfg.serialize();
  ck.step = opt.steps();
  for (const auto& [name, t] : model.parameters())
    ck.tensors.emplace_back(name, t);
  for (const auto& [name, t] : opt.state()) ck.tensors.emplace_back(name, t);
  return ck;
}

void check_data_dims(const RunConfig& cfg,
                     const std::vector<data::Segment>& segs) {
  if (segs.empty()) throw Error("dataset is empty");
  const Shape& fs = segs[0].frames.at(0).shape();
  if (fs[0] != cfg.n || fs[1] != cfg.c_in)
    throw Error("data frames are " + shape_str(fs) + " but the model expects (" +
                std::to_string(cfg.n) + ", " + std::to_string(cfg.c_in) + ")");
}

int cmd_gen_data(const GlobalArgs& g) {
  RunConfig cfg = load_config(g);
  if (!g.out.empty()) cfg.features_path = g.out;
  data::SyntheticConfig sc = cfg.data;
  sc.seed = cfg.seed;
  sc.fps = cfg.anticipation.fps;
  sc.validate();

  const auto segs = data::gen_dataset(sc, cfg.data_count);
  data::write_features(cfg.features_path, segs);
  data::write_annotations(cfg.resolved_annotations_path(), segs);
  std::printf("wrote %zu segments to %s (+ %s)\n", segs.size(),
              cfg.features_path.c_str(),
              cfg.resolved_annotations_path().c_str());
  return 0;
}

struct TrainArgs {
  std::string data_path;
  std::string strategy;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
};

int cmd_train(const GlobalArgs& g, const TrainArgs& ta) {
  RunConfig cfg = load_config(g);
  if (!ta.data_path.empty()) {
    cfg.features_path = ta.data_path;
    cfg.annotations_path = "";
  }
  if (!ta.strategy.empty()) {
    if (ta.strategy == "implicit") cfg.strategy = EdgeKind::implicit;
    else if (ta.strategy == "tb") cfg.strategy = EdgeKind::tb;
    else if (ta.strategy == "ctp") cfg.strategy = EdgeKind::ctp;
    else throw ConfigError("--strategy must be implicit|tb|ctp, got '" +
                           ta.strategy + "'");
  }
  if (ta.lr) cfg.optimizer.lr = *ta.lr;
  if (ta.epochs) cfg.optimizer.epochs = *ta.epochs;
  if (!g.out.empty()) cfg.checkpoint_path = g.out;
  cfg.validate();

  auto segs = data::load_features(cfg.features_path,
                                  cfg.resolved_annotations_path());
  check_data_dims(cfg, segs);

  // Drop segments the sampler cannot serve, loudly.
  std::vector<data::Segment> usable;
  for (auto& s : segs) {
    std::string warn;
    if (pipeline::frame_indices(cfg.anticipation, s.t_start_s,
                                cfg.anticipation.fps, s.frames.size(), &warn))
      usable.push_back(std::move(s));
    else
      std::fprintf(stderr, "skipping segment '%s': %s\n", s.id.c_str(),
                   warn.c_str());
  }

  std::vector<data::Segment> train_set, val_set;
  if (cfg.val_fraction > 0.0) {
    auto parts = data::split(std::move(usable), 1.0 - cfg.val_fraction,
                             cfg.val_fraction, cfg.seed);
    train_set = std::move(parts.first);
    val_set = std::move(parts.second);
  } else {
    train_set = std::move(usable);
  }

  Rng rng(cfg.seed);
  auto model = build_model(cfg, rng);
  Optimizer opt(cfg.optimizer, model.parameters());

  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path, std::ios::trunc);
    if (!log_file) throw Error("cannot open log '" + cfg.log_path + "'");
  }

  pipeline::TrainOptions opts;
  opts.seed = cfg.seed;
  opts.eval_every = cfg.eval_every;
  opts.log_line = [&](const std::string& line) {
    std::puts(line.c_str());
    if (log_file) log_file << line << '\n';
  };
  opts.on_epoch_end = [&](std::size_t epoch) {
    if (cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.optimizer.epochs) {
      save_checkpoint(cfg.checkpoint_path + ".ep" + std::to_string(epoch + 1),
                      make_checkpoint(model, cfg, opt));
    }
  };

  try {
    pipeline::train(model, opt, train_set, val_set, cfg.optimizer,
                    cfg.anticipation, opts);
  } catch (const pipeline::DivergenceError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  save_checkpoint(cfg.checkpoint_path, make_checkpoint(model, cfg, opt));
  std::printf("checkpoint written to %s\n", cfg.checkpoint_path.c_str());

  if (!val_set.empty()) {
    const auto rep = pipeline::evaluate(model, val_set, cfg.anticipation);
    std::fputs(rep.table().c_str(), stdout);
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path;
  std::string features;
  std::string annotations;
};

int cmd_eval(const GlobalArgs& g, const EvalArgs& ea) {
  const Checkpoint ck = load_checkpoint(ea.checkpoint_path);
  RunConfig cfg = RunConfig::parse(ck.config_text);
  if (g.seed) cfg.seed = *g.seed;

  Rng rng(cfg.seed);
  auto model = build_model(cfg, rng);
  apply_checkpoint(model, ck);

  const std::string features =
      ea.features.empty() ? cfg.features_path : ea.features;
  const std::string annotations =
      ea.annotations.empty()
          ? (ea.features.empty() ? cfg.resolved_annotations_path()
                                 : features + ".ann")
          : ea.annotations;
  const auto segs = data::load_features(features, annotations);
  check_data_dims(cfg, segs);

  const auto rep = pipeline::evaluate(model, segs, cfg.anticipation);
  std::fputs(rep.table().c_str(), stdout);
  std::fputs(rep.csv().c_str(), stdout);
  if (!g.out.empty()) write_text(g.out, rep.csv());
  return 0;
}

int cmd_gradcheck(const GlobalArgs& g, const std::string& strategy_sel) {
  RunConfig base = load_config(g);

  // Toy dims and double precision are forced; finite differences are
  // meaningless at single precision or real scale.
  RunConfig cfg = base;
  cfg.precision = Precision::f64;
  cfg.n = 4;
  cfg.c = 8;
  cfg.c_in = 8;
  cfg.heads = 2;
  cfg.bank_size = 4;
  cfg.verb_classes = 3;
  cfg.noun_classes = 3;
  cfg.action_classes = 9;
  cfg.classifier_source = HeadSourceChoice::auto_select;
  const std::size_t T = 3;

  std::vector<EdgeKind> kinds;
  if (strategy_sel == "all" || strategy_sel.empty())
    kinds = {EdgeKind::implicit, EdgeKind::tb, EdgeKind::ctp};
  else if (strategy_sel == "implicit") kinds = {EdgeKind::implicit};
  else if (strategy_sel == "tb") kinds = {EdgeKind::tb};
  else if (strategy_sel == "ctp") kinds = {EdgeKind::ctp};
  else
    throw ConfigError("--strategy must be implicit|tb|ctp|all, got '" +
                      strategy_sel + "'");

  std::printf("gradcheck dims: N=%zu C=%zu heads=%zu T=%zu (double)\n", cfg.n,
              cfg.c, cfg.heads, T);

  bool all_ok = true;
  for (EdgeKind kind : kinds) {
    cfg.strategy = kind;
    Rng rng(cfg.seed);
    auto model = build_model(cfg, rng);

    std::vector<Tensor> frames;
    Rng frame_rng(cfg.seed + 1);
    for (std::size_t t = 0; t < T; ++t)
      frames.push_back(Tensor::randn({cfg.n, cfg.c_in}, frame_rng, 0.0, 1.0,
                                     Precision::f64));
    const std::vector<int> verb_label = {1}, noun_label = {2}, act_label = {5};

    auto f = [&]() {
      std::set<std::size_t> steps;
      for (std::size_t t = 0; t < T; ++t) steps.insert(t);
      const auto readouts =
          cell::run_sequence(model.cell, model.strategy, frames, steps);
      Tensor loss;
      for (const auto& r : readouts) {
        const auto logits = pipeline::readout_logits(model, r);
        Tensor li = ops::add(ops::cross_entropy(logits.verb, verb_label),
                             ops::cross_entropy(logits.noun, noun_label));
        li = ops::add(li, ops::cross_entropy(logits.action, act_label));
        loss = loss.defined() ? ops::add(loss, li) : li;
      }
      return loss;
    };

    const auto report = grad_check(f, model.parameters(), 1e-5);
    const char* name = kind == EdgeKind::implicit
                           ? "implicit"
                           : (kind == EdgeKind::tb ? "tb" : "ctp");
    for (const auto& [param, err] : report.per_leaf)
      std::printf("%s %-34s %.3e\n", name, param.c_str(), err);
    std::printf("%s: max relative error %.3e %s\n", name,
                report.max_rel_error,
                report.max_rel_error < 1e-5 ? "(pass)" : "(FAIL)");
    all_ok = all_ok && report.max_rel_error < 1e-5;
  }
  return all_ok ? 0 : 1;
}

struct InspectArgs {
  std::string checkpoint_path;
  std::string features;
  std::string annotations;
  std::size_t segment = 0;
};

int cmd_inspect(const GlobalArgs& g, const InspectArgs& ia) {
  const Checkpoint ck = load_checkpoint(ia.checkpoint_path);
  RunConfig cfg = RunConfig::parse(ck.config_text);
  if (cfg.strategy == EdgeKind::implicit)
    throw Error("no explicit edges: checkpoint uses the implicit strategy");

  Rng rng(cfg.seed);
  auto model = build_model(cfg, rng);
  apply_checkpoint(model, ck);

  const std::string features =
      ia.features.empty() ? cfg.features_path : ia.features;
  const std::string annotations =
      ia.annotations.empty()
          ? (ia.features.empty() ? cfg.resolved_annotations_path()
                                 : features + ".ann")
          : ia.annotations;
  const auto segs = data::load_features(features, annotations);
  check_data_dims(cfg, segs);
  if (ia.segment >= segs.size())
    throw Error("segment index " + std::to_string(ia.segment) +
                " out of range (" + std::to_string(segs.size()) + " segments)");
  const data::Segment& seg = segs[ia.segment];

  std::string warn;
  const auto plan = pipeline::frame_indices(cfg.anticipation, seg.t_start_s,
                                            cfg.anticipation.fps,
                                            seg.frames.size(), &warn);
  if (!plan) throw Error("cannot sample segment '" + seg.id + "': " + warn);

  std::vector<Tensor> window;
  for (std::size_t idx : plan->indices) {
    const Tensor& f = seg.frames[idx];
    window.push_back(f.precision() == cfg.precision ? f
                                                    : f.cast(cfg.precision));
  }

  const std::string out_dir = g.out.empty() ? "inspect_out" : g.out;
  fs::create_directories(out_dir);

  cell::SequenceTrace trace;
  cell::run_sequence(model.cell, model.strategy, window, {}, &trace);

  char name[64];
  for (std::size_t t = 0; t < trace.adjacency.size(); ++t) {
    if (!trace.adjacency[t]) continue;
    const Tensor& a = *trace.adjacency[t];
    std::snprintf(name, sizeof(name), "/A_t%02zu.csv", t);
    write_csv_matrix(out_dir + name, a);
    std::snprintf(name, sizeof(name), "/A_softmax_t%02zu.csv", t);
    write_csv_matrix(out_dir + name, ops::softmax(a, 1));
    if (trace.selector[t]) {
      std::snprintf(name, sizeof(name), "/selector_t%02zu.csv", t);
      write_csv_matrix(out_dir + name, *trace.selector[t]);
    }
    if (!trace.projections[t].empty()) {
      Tensor stacked = Tensor::zeros(
          {trace.projections[t].size(), trace.projections[t][0].numel()},
          cfg.precision);
      for (std::size_t r = 0; r < trace.projections[t].size(); ++r)
        for (std::size_t c = 0; c < trace.projections[t][r].numel(); ++c)
          stacked.mutable_storage().set(
              r * trace.projections[t][r].numel() + c,
              trace.projections[t][r].at(c));
      std::snprintf(name, sizeof(name), "/proj_t%02zu.csv", t);
      write_csv_matrix(out_dir + name, stacked);
    }
  }
  std::printf("wrote per-step adjacency dumps for segment '%s' to %s\n",
              seg.id.c_str(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified recurrence model: action anticipation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "run configuration file");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override RNG seed");
  app.add_flag("--deterministic", g.deterministic,
               "force deterministic execution");
  app.add_option("--out", g.out, "output path (meaning depends on command)");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");

  auto* tr = app.add_subcommand("train", "train a model");
  TrainArgs ta;
  tr->add_option("--data", ta.data_path, "feature file (annotations at .ann)");
  tr->add_option("--strategy", ta.strategy, "implicit|tb|ctp");
  double lr_value = 0;
  auto* lr_opt = tr->add_option("--lr", lr_value, "override learning rate");
  std::size_t epochs_value = 0;
  auto* ep_opt = tr->add_option("--epochs", epochs_value, "override epochs");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  EvalArgs ea;
  ev->add_option("--checkpoint", ea.checkpoint_path, "checkpoint file")
      ->required();
  ev->add_option("--features", ea.features, "feature file");
  ev->add_option("--annotations", ea.annotations, "annotation file");

  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient verification");
  std::string gc_strategy = "all";
  gc->add_option("--strategy", gc_strategy, "implicit|tb|ctp|all");

  auto* in = app.add_subcommand("inspect", "dump per-step adjacency matrices");
  InspectArgs ia;
  in->add_option("--checkpoint", ia.checkpoint_path, "checkpoint file")
      ->required();
  in->add_option("--features", ia.features, "feature file");
  in->add_option("--annotations", ia.annotations, "annotation file");
  in->add_option("--segment", ia.segment, "segment index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  if (seed_opt->count()) g.seed = seed_value;
  if (lr_opt->count()) ta.lr = lr_value;
  if (ep_opt->count()) ta.epochs = epochs_value;

  try {
    if (gen->parsed()) return cmd_gen_data(g);
    if (tr->parsed()) return cmd_train(g, ta);
    if (ev->parsed()) return cmd_eval(g, ea);
    if (gc->parsed()) return cmd_gradcheck(g, gc_strategy);
    if (in->parsed()) return cmd_inspect(g, ia);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
