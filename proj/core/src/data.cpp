// SPDX-License-Identifier: Apache-2.0
#include "urm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "binio.hpp"
#include "urm/rng.hpp"

namespace urm::data {

void SyntheticConfig::validate() const {
  if (vertices() < 4) throw ConfigError("synthetic: need at least 4 vertices");
  if (verbs < 1 || nouns < 1 || verbs * nouns < 2)
    throw ConfigError("synthetic: verbs x nouns must be >= 2");
  if (nouns > vertices())
    throw ConfigError("synthetic: more nouns than vertices");
  if (seq_len < 16)
    throw ConfigError("synthetic: seq_len must be >= 16 (14 observed + skip)");
  if (c_in < 1) throw ConfigError("synthetic: c_in must be >= 1");
  if (fps <= 0) throw ConfigError("synthetic: fps must be positive");
  if (sigma < 0) throw ConfigError("synthetic: sigma must be >= 0");
}

std::pair<std::size_t, std::size_t> noun_vertex_range(std::size_t n_vertices,
                                                      std::size_t nouns,
                                                      int noun) {
  const std::size_t block = n_vertices / nouns;
  const std::size_t first = static_cast<std::size_t>(noun) * block;
  return {first, first + block};
}

double verb_amplitude(int verb, double phase) {
  // Distinct trajectories, all bounded in [0.5, 2.0].
  switch (verb) {
    case 0: return 1.25;
    case 1: return 0.5 + 1.5 * phase;
    case 2: return 2.0 - 1.5 * phase;
    case 3: return 1.25 + 0.75 * std::sin(2.0 * std::numbers::pi * phase);
    case 4: return 1.25 - 0.75 * std::sin(2.0 * std::numbers::pi * phase);
    default: {
      const double freq = 1.0 + static_cast<double>((verb - 3) / 2);
      const double shift = (verb % 2) * std::numbers::pi / 2.0;
      return 1.25 +
             0.75 * std::sin(2.0 * std::numbers::pi * freq * phase + shift);
    }
  }
}

std::vector<Segment> gen_dataset(const SyntheticConfig& cfg,
                                 std::size_t count) {
  cfg.validate();
  const std::size_t n = cfg.vertices();
  std::vector<Segment> out;
  out.reserve(count);

  for (std::size_t idx = 0; idx < count; ++idx) {
    Rng rng(Rng::mix(cfg.seed, idx));
    Segment seg;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "seg%06zu", idx);
    seg.id = idbuf;

    seg.labels.verb = static_cast<int>(rng.uniform_int(0, cfg.verbs - 1));
    seg.labels.noun = static_cast<int>(rng.uniform_int(0, cfg.nouns - 1));
    seg.labels.action =
        seg.labels.verb * static_cast<int>(cfg.nouns) + seg.labels.noun;

    // Preamble length in frames: at least the 14-frame observation window,
    // leaving at least one never-observed frame at the tail (the structural
    // "skip" period).
    const std::size_t preamble =
        14 + static_cast<std::size_t>(rng.uniform_int(0, cfg.seq_len - 15));
    seg.t_start_s = static_cast<double>(preamble) / cfg.fps;

    const auto [v_first, v_last] =
        noun_vertex_range(n, cfg.nouns, seg.labels.noun);

    for (std::size_t t = 0; t < cfg.seq_len; ++t) {
      Tensor frame = Tensor::zeros({n, cfg.c_in}, Precision::f32);
      float* px = frame.mutable_data<float>();
      const bool observed_side = t < preamble;
      const double phase =
          static_cast<double>(t) / static_cast<double>(preamble);
      const double amp =
          observed_side ? verb_amplitude(seg.labels.verb, phase) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool in_subset =
            observed_side && i >= v_first && i < v_last;
        for (std::size_t c = 0; c < cfg.c_in; ++c) {
          double val = cfg.sigma * rng.normal(0.0, 1.0);
          if (in_subset) val += amp;
          px[i * cfg.c_in + c] = static_cast<float>(val);
        }
      }
      seg.frames.push_back(std::move(frame));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void write_features(const std::string& path, std::span<const Segment> segs) {
  detail::ByteWriter w;
  w.str("URMF");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(segs.size()));
  for (const Segment& s : segs) {
    w.u16(static_cast<std::uint16_t>(s.id.size()));
    w.str(s.id);
    const std::size_t t = s.frames.size();
    const std::size_t n = t ? s.frames[0].shape()[0] : 0;
    const std::size_t c = t ? s.frames[0].shape()[1] : 0;
    w.u32(static_cast<std::uint32_t>(t));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(c));
    for (const Tensor& f : s.frames) {
      const float* p = f.cdata<float>();
      for (std::size_t i = 0; i < f.numel(); ++i) w.f32(p[i]);
    }
  }
  detail::write_file(path, w.buffer());
}

void write_annotations(const std::string& path,
                       std::span<const Segment> segs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const Segment& s : segs) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%.9g,%d,%d,%d\n", s.id.c_str(),
                  s.t_start_s, s.labels.verb, s.labels.noun, s.labels.action);
    out << line;
  }
}

namespace {
struct Annotation {
  double t_start_s;
  Labels labels;
};

std::map<std::string, Annotation> parse_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::map<std::string, Annotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, field;
    Annotation a;
    if (!std::getline(ss, id, ',')) continue;
    try {
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("t");
      a.t_start_s = std::stod(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("v");
      a.labels.verb = std::stoi(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("n");
      a.labels.noun = std::stoi(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("a");
      a.labels.action = std::stoi(field);
    } catch (const std::exception&) {
      throw Error("malformed annotation at " + path + ":" +
                  std::to_string(lineno) + ": '" + line + "'");
    }
    out[id] = a;
  }
  return out;
}
}  // namespace

std::vector<Segment> load_features(const std::string& features_path,
                                   const std::string& annotations_path) {
  detail::ByteReader r(detail::read_file(features_path));
  const std::string magic = r.str(4, "magic");
  if (magic != "URMF")
    throw ParseError("bad magic '" + magic + "', expected 'URMF'", 0);
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw ParseError("unsupported feature-file version " +
                         std::to_string(version),
                     4);
  const std::uint32_t count = r.u32("segment count");

  auto annotations = parse_annotations(annotations_path);

  std::vector<Segment> out;
  out.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    Segment seg;
    const std::uint16_t idlen = r.u16("id length");
    seg.id = r.str(idlen, "id");
    const std::uint32_t t = r.u32("frame count");
    const std::uint32_t n = r.u32("vertex count");
    const std::uint32_t c = r.u32("feature width");
    if (t == 0 || n == 0 || c == 0)
      throw ParseError("segment '" + seg.id + "' has empty dimensions (T=" +
                           std::to_string(t) + ", N=" + std::to_string(n) +
                           ", C=" + std::to_string(c) + ")",
                       r.offset());
    for (std::uint32_t f = 0; f < t; ++f) {
      Tensor frame = Tensor::zeros({n, c}, Precision::f32);
      float* p = frame.mutable_data<float>();
      r.need(std::size_t(n) * c * 4, "frame payload");
      for (std::size_t i = 0; i < std::size_t(n) * c; ++i)
        p[i] = r.f32("frame payload");
      seg.frames.push_back(std::move(frame));
    }
    const auto it = annotations.find(seg.id);
    if (it == annotations.end())
      throw Error("feature segment '" + seg.id + "' has no annotation in " +
                  annotations_path);
    seg.t_start_s = it->second.t_start_s;
    seg.labels = it->second.labels;
    annotations.erase(it);
    out.push_back(std::move(seg));
  }
  if (!r.exhausted())
    throw ParseError("trailing bytes after last segment", r.offset());
  if (!annotations.empty()) {
    std::string orphans;
    for (const auto& [id, a] : annotations) {
      if (!orphans.empty()) orphans += ", ";
      orphans += "'" + id + "'";
    }
    throw Error("annotations with no feature blob: " + orphans);
  }
  return out;
}

std::pair<std::vector<Segment>, std::vector<Segment>> split(
    std::vector<Segment> all, double train_fraction, double val_fraction,
    std::uint64_t seed) {
  if (std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
    throw ContractError("split: fractions must sum to 1");
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 eng(seed);
  std::shuffle(order.begin(), order.end(), eng);

  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(all.size())));
  std::pair<std::vector<Segment>, std::vector<Segment>> result;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Segment& s = all[order[i]];
    if (i < n_train)
      result.first.push_back(std::move(s));
    else
      result.second.push_back(std::move(s));
  }
  return result;
}

}  // namespace urm::data
