#pragma once

#include "latentdur/types.hpp"

#include <string>
#include <vector>

namespace latentdur {

/// Synthetic corpus recipe. Each token id has a base duration in
/// super-frame units (default 1 + (v mod K)); items draw tokens
/// uniformly and emit the token's prototype vector for g * l frames
/// plus isotropic Gaussian noise.
struct GenSpec {
  int V = 8;
  int O = 8;
  int n_items = 200;
  int U_min = 3;
  int U_max = 8;
  int K = 5;
  int g = 1;
  double noise_std = 0.3;
  std::vector<int> profile;  // per-token durations; empty = 1 + (v mod K)
  int jitter = 0;            // uniform jitter radius around the base, clamped
  double prototype_scale = 1.0;  // RMS per component of each prototype

  void validate() const;  // throws std::invalid_argument
};

std::string genspec_to_json(const GenSpec& spec);
GenSpec genspec_from_json(const std::string& text);

struct CorpusItem {
  TokenSequence tokens;
  FrameSequence frames;
  DurationSequence true_durations;  // never read by the trainer
};

struct Corpus {
  std::vector<CorpusItem> items;
};

Corpus gen_corpus(const GenSpec& spec, std::uint64_t seed);

/// JSON-lines, one item per line:
/// {"tokens": [...], "frames": {"rows": T, "cols": O, "data": [row-major]},
///  "true_durations": [...]}
void save_corpus(const Corpus& corpus, const std::string& path);

/// Errors name the offending 1-based line number.
Corpus load_corpus(const std::string& path);

}  // namespace latentdur
