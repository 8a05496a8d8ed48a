// SPDX-License-Identifier: Apache-2.0
#include "urm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace urm {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v +
                      "' as a number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v +
                      "' as an unsigned integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    v + "'");
}

std::string fmt_double(double d) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty())
    throw ConfigError("config key '" + key + "': empty list");
  return out;
}

template <class Enum>
struct EnumCodec {
  std::vector<std::pair<std::string, Enum>> entries;

  Enum parse(const std::string& key, const std::string& v) const {
    for (const auto& [name, value] : entries)
      if (name == v) return value;
    std::string allowed;
    for (const auto& [name, value] : entries) {
      if (!allowed.empty()) allowed += "|";
      allowed += name;
    }
    throw ConfigError("config key '" + key + "': expected one of " + allowed +
                      ", got '" + v + "'");
  }
  std::string format(Enum e) const {
    for (const auto& [name, value] : entries)
      if (value == e) return name;
    return "?";
  }
};

const EnumCodec<Precision> kPrecision{{{"single", Precision::f32},
                                       {"double", Precision::f64}}};
const EnumCodec<nn::ScaleMode> kScaleMode{
    {{"input_dim", nn::ScaleMode::input_dim},
     {"head_dim", nn::ScaleMode::head_dim}}};
const EnumCodec<cell::UpdateTake> kUpdateTake{
    {{"message_half", cell::UpdateTake::message_half},
     {"vertex_half", cell::UpdateTake::vertex_half}}};
const EnumCodec<EdgeKind> kEdgeKind{{{"implicit", EdgeKind::implicit},
                                     {"tb", EdgeKind::tb},
                                     {"ctp", EdgeKind::ctp}}};
const EnumCodec<edges::CtpVariant> kCtpVariant{
    {{"global", edges::CtpVariant::global},
     {"vn", edges::CtpVariant::vn},
     {"vna", edges::CtpVariant::vna}}};
const EnumCodec<HeadSourceChoice> kHeadSource{
    {{"auto", HeadSourceChoice::auto_select},
     {"mean_pool", HeadSourceChoice::mean_pool},
     {"cls_tokens", HeadSourceChoice::cls_tokens}}};
const EnumCodec<pipeline::ActionHeadMode> kActionHead{
    {{"separate", pipeline::ActionHeadMode::separate},
     {"compose", pipeline::ActionHeadMode::compose}}};
const EnumCodec<OptKind> kOptKind{{{"sgd", OptKind::sgd},
                                   {"adam", OptKind::adam}}};

struct Field {
  std::function<void(RunConfig&, const std::string& key,
                     const std::string& value)>
      set;
  std::function<std::string(const RunConfig&)> get;
};

// Canonical key order; serialize() emits exactly these keys.
const std::vector<std::pair<std::string, Field>>& field_table() {
  auto num = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& k,
                          const std::string& v) { c.*member = parse_u64(k, v); },
                 [member](const RunConfig& c) {
                   return std::to_string(c.*member);
                 }};
  };
  auto dbl = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& k,
                          const std::string& v) { c.*member = parse_double(k, v); },
                 [member](const RunConfig& c) { return fmt_double(c.*member); }};
  };
  auto str = [](auto member) {
    return Field{[member](RunConfig& c, const std::string&,
                          const std::string& v) { c.*member = v; },
                 [member](const RunConfig& c) { return c.*member; }};
  };
  auto enm = [](auto member, const auto& codec) {
    return Field{[member, &codec](RunConfig& c, const std::string& k,
                                  const std::string& v) {
                   c.*member = codec.parse(k, v);
                 },
                 [member, &codec](const RunConfig& c) {
                   return codec.format(c.*member);
                 }};
  };

  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", num(&RunConfig::seed)},
      {"deterministic",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.deterministic = parse_bool(k, v);
        },
        [](const RunConfig& c) {
          return std::string(c.deterministic ? "true" : "false");
        }}},
      {"precision", enm(&RunConfig::precision, kPrecision)},

      {"model.n", num(&RunConfig::n)},
      {"model.c", num(&RunConfig::c)},
      {"model.c_in", num(&RunConfig::c_in)},
      {"model.heads", num(&RunConfig::heads)},
      {"model.scale_mode", enm(&RunConfig::scale_mode, kScaleMode)},
      {"model.update_take", enm(&RunConfig::update_take, kUpdateTake)},
      {"model.strategy", enm(&RunConfig::strategy, kEdgeKind)},
      {"model.bank_size", num(&RunConfig::bank_size)},
      {"model.ctp_variant", enm(&RunConfig::ctp_variant, kCtpVariant)},
      {"model.classifier_source",
       enm(&RunConfig::classifier_source, kHeadSource)},
      {"model.verb_classes", num(&RunConfig::verb_classes)},
      {"model.noun_classes", num(&RunConfig::noun_classes)},
      {"model.action_classes", num(&RunConfig::action_classes)},

      {"pipeline.action_head", enm(&RunConfig::action_head, kActionHead)},

      {"anticipation.num_frames",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.anticipation.num_frames = parse_u64(k, v);
        },
        [](const RunConfig& c) {
          return std::to_string(c.anticipation.num_frames);
        }}},
      {"anticipation.stride_s",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.anticipation.stride_s = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.anticipation.stride_s); }}},
      {"anticipation.intervals",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.anticipation.intervals_s = parse_double_list(k, v);
        },
        [](const RunConfig& c) {
          std::string out;
          for (double v : c.anticipation.intervals_s) {
            if (!out.empty()) out += ",";
            out += fmt_double(v);
          }
          return out;
        }}},
      {"anticipation.fps",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.anticipation.fps = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.anticipation.fps); }}},

      {"optimizer.kind",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.kind = kOptKind.parse(k, v);
        },
        [](const RunConfig& c) { return kOptKind.format(c.optimizer.kind); }}},
      {"optimizer.lr",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.lr = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.lr); }}},
      {"optimizer.weight_decay",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.weight_decay = parse_double(k, v);
        },
        [](const RunConfig& c) {
          return fmt_double(c.optimizer.weight_decay);
        }}},
      {"optimizer.momentum",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.momentum = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.momentum); }}},
      {"optimizer.beta1",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.beta1 = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.beta1); }}},
      {"optimizer.beta2",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.beta2 = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.beta2); }}},
      {"optimizer.eps",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.eps = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.eps); }}},
      {"optimizer.epochs",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.epochs = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.optimizer.epochs); }}},
      {"optimizer.batch_size",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.batch_size = parse_u64(k, v);
        },
        [](const RunConfig& c) {
          return std::to_string(c.optimizer.batch_size);
        }}},
      {"optimizer.cosine_fraction",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.cosine_fraction = parse_double(k, v);
        },
        [](const RunConfig& c) {
          return fmt_double(c.optimizer.cosine_fraction);
        }}},
      {"optimizer.lr_min",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.optimizer.lr_min = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.optimizer.lr_min); }}},

      {"train.val_fraction", dbl(&RunConfig::val_fraction)},
      {"train.eval_every", num(&RunConfig::eval_every)},
      {"train.checkpoint_every", num(&RunConfig::checkpoint_every)},

      {"data.grid_h",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.grid_h = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.grid_h); }}},
      {"data.grid_w",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.grid_w = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.grid_w); }}},
      {"data.c_in",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.c_in = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.c_in); }}},
      {"data.verbs",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.verbs = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.verbs); }}},
      {"data.nouns",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.nouns = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.nouns); }}},
      {"data.sigma",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.sigma = parse_double(k, v);
        },
        [](const RunConfig& c) { return fmt_double(c.data.sigma); }}},
      {"data.seq_len",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data.seq_len = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data.seq_len); }}},
      {"data.count",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.data_count = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.data_count); }}},

      {"paths.features", str(&RunConfig::features_path)},
      {"paths.annotations", str(&RunConfig::annotations_path)},
      {"paths.checkpoint", str(&RunConfig::checkpoint_path)},
      {"paths.log", str(&RunConfig::log_path)},
  };
  return table;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    bool found = false;
    for (const auto& [name, field] : field_table()) {
      if (name == key) {
        field.set(cfg, key, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [name, field] : field_table())
    out += name + " = " + field.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (n < 1 || c < 1 || c_in < 1)
    throw ConfigError("model dims must be positive");
  if (heads == 0 || c % heads != 0)
    throw ConfigError("model.heads (" + std::to_string(heads) +
                      ") must divide model.c (" + std::to_string(c) + ")");
  if (strategy == EdgeKind::tb && bank_size < 1)
    throw ConfigError("model.bank_size must be >= 1");
  if (classifier_source == HeadSourceChoice::cls_tokens &&
      strategy != EdgeKind::ctp)
    throw ConfigError("classifier_source = cls_tokens requires the ctp strategy");
  if (action_head == pipeline::ActionHeadMode::compose &&
      action_classes != verb_classes * noun_classes)
    throw ConfigError(
        "pipeline.action_head = compose requires action_classes == "
        "verb_classes * noun_classes");
  if (verb_classes < 1 || noun_classes < 1 || action_classes < 1)
    throw ConfigError("class counts must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("train.val_fraction must be in [0, 1)");
  anticipation.validate();
}

}  // namespace urm
