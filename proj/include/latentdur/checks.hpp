#pragma once

#include "latentdur/trellis.hpp"
#include "latentdur/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace latentdur {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Random normalized emission table for a (T', V) instance.
EmissionTable random_emissions(int t_steps, int vocab, std::mt19937_64& rng);

/// Log-probability of one duration hypothesis, accumulated directly
/// over the alignment path. Independent of the trellis recursions.
double path_log_score(const EmissionTable& em, const TokenSequence& y,
                      const DurationSequence& l);

/// Every valid duration sequence scored by path_log_score, sorted by
/// score descending with lexicographic tie-break.
std::vector<ScoredDuration> brute_force_nbest(const EmissionTable& em,
                                              const TokenSequence& y,
                                              int k_max);

/// Criterion machinery shared by `latentdur check` and the acceptance
/// suite. Each function draws its own instances from the given seed.
std::vector<CheckResult> run_oracle_equivalence(std::uint64_t seed);
std::vector<CheckResult> run_gradient_suite(std::uint64_t seed);
std::vector<CheckResult> run_identity_suite(std::uint64_t seed);
std::vector<CheckResult> run_constraint_suite(std::uint64_t seed);
std::vector<CheckResult> run_all_checks(std::uint64_t seed);

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace latentdur
