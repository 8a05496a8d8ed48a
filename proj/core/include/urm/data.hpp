// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urm/tensor.hpp"

namespace urm::data {

/// Synthetic anticipation-task generator settings. The noun label selects a
/// vertex subset carrying signal; the verb label selects the temporal
/// amplitude pattern of that signal over the preamble, so labels are
/// recoverable from the observed frames by construction.
struct SyntheticConfig {
  std::size_t grid_h = 4, grid_w = 4;  // vertex grid, N = grid_h * grid_w
  std::size_t c_in = 32;               // feature width
  std::size_t verbs = 5, nouns = 5;
  double sigma = 0.5;        // additive noise stddev
  std::size_t seq_len = 16;  // frames per segment, >= 16 (observed 14 + skip)
  double fps = 4.0;
  std::uint64_t seed = 1;

  std::size_t vertices() const { return grid_h * grid_w; }
  void validate() const;

  bool operator==(const SyntheticConfig&) const = default;
};

struct Labels {
  int verb = 0, noun = 0, action = 0;
};

struct Segment {
  std::string id;
  std::vector<Tensor> frames;  // each (N, C_in)
  double t_start_s = 0.0;      // action start; frames at/after it are unseen
  Labels labels;
};

/// Deterministic given (cfg.seed, index); segment i draws from its own
/// derived stream so generation order does not matter.
std::vector<Segment> gen_dataset(const SyntheticConfig& cfg, std::size_t count);

/// Vertex index range [first, last) carrying signal for a noun label.
std::pair<std::size_t, std::size_t> noun_vertex_range(std::size_t n_vertices,
                                                      std::size_t nouns,
                                                      int noun);

/// Signal amplitude for a verb label at preamble phase in [0, 1).
/// Bounded in [0.5, 2.0] so the noun subset stays detectable on every frame.
double verb_amplitude(int verb, double phase);

//
// Feature-file persistence. Header: magic "URMF", version u32, segment count
// u32. Per segment: id (u16 length + bytes), T u32, N u32, C_in u32, then
// T*N*C_in little-endian f32, row-major. Annotations are text lines
// `id,t_start_s,verb,noun,action`.
//

void write_features(const std::string& path, std::span<const Segment> segs);
void write_annotations(const std::string& path, std::span<const Segment> segs);

/// Read features and join annotations by segment id. Malformed bytes raise
/// ParseError with the offending byte offset; an annotation without a feature
/// blob (or a blob without an annotation) is an error naming the id.
std::vector<Segment> load_features(const std::string& features_path,
                                   const std::string& annotations_path);

/// Seed-deterministic disjoint shuffle split; fractions must sum to 1.
std::pair<std::vector<Segment>, std::vector<Segment>> split(
    std::vector<Segment> all, double train_fraction, double val_fraction,
    std::uint64_t seed);

}  // namespace urm::data
