#pragma once

#include "latentdur/types.hpp"

#include <string>
#include <vector>

namespace latentdur {

/// Per-step alignment probabilities, all in the log domain and
/// normalized per row:
///   log_trans: T' x 2, column 0 = P(a_t = Blank | x_t),
///                      column 1 = P(a_t = Shift | x_t)
///   log_emit:  T' x V, log P(token | x_t)
struct EmissionTable {
  Matrix log_trans;
  Matrix log_emit;

  int num_steps() const { return static_cast<int>(log_trans.rows()); }
  int vocab() const { return static_cast<int>(log_emit.cols()); }

  /// Every row of both tables must log-sum to 0 within tol.
  ValidationReport validate(double tol = 1e-9) const;
};

/// Log-domain forward/backward tables over states (t, u, r), where r is
/// the run length of token u after frame t, 0-based with run = r + 1.
/// Unreachable states hold -inf. Row-major layout (t, u, r).
struct Trellis {
  int T = 0;
  int U = 0;
  int K = 0;
  bool feasible = false;  // U <= T <= U*K
  std::vector<double> log_alpha;
  std::vector<double> log_beta;
  std::vector<std::uint8_t> reachable;  // alpha and beta both finite

  int index(int t, int u, int r) const { return (t * U + u) * K + r; }
  double alpha(int t, int u, int r) const { return log_alpha[index(t, u, r)]; }
  double beta(int t, int u, int r) const { return log_beta[index(t, u, r)]; }
};

/// Fills log_alpha. alpha(t,u,r) sums all valid prefixes that end at
/// frame t inside token u with run length r+1; a Blank extension is
/// only allowed while the run is below K.
Trellis forward(const EmissionTable& em, const TokenSequence& y, int k_max);

/// Fills log_beta, the mirror recursion from the terminal states
/// (T'-1, U-1, r). beta excludes frame t's own event, so alpha + beta
/// is the total mass of paths through a state.
Trellis backward(const EmissionTable& em, const TokenSequence& y, int k_max);

/// Both tables plus the reachability mask.
Trellis forward_backward(const EmissionTable& em, const TokenSequence& y,
                         int k_max);

/// log P(y | x): log-sum-exp over terminal states of log_alpha.
/// -inf when no valid path exists.
double log_marginal(const Trellis& trellis);

/// Gradient of log_marginal w.r.t. every log_trans / log_emit entry,
/// treating the entries as free inputs. Equals posterior expected
/// event counts (occupancy of Shift/Blank and of token emissions).
struct MarginalGradient {
  double log_marginal = 0.0;
  Matrix d_log_trans;  // T' x 2
  Matrix d_log_emit;   // T' x V
};

MarginalGradient marginal_gradient(const EmissionTable& em,
                                   const TokenSequence& y, int k_max);

struct ScoredAlignment {
  Alignment alignment;
  double log_score = 0.0;
};

struct ScoredDuration {
  DurationSequence durations;
  double log_score = 0.0;
};

/// Highest-probability valid alignment. Ties are broken toward the
/// lexicographically smallest duration sequence, i.e. the earliest
/// Shift wins. Throws InfeasibleError when no valid path exists.
ScoredAlignment viterbi_best(const EmissionTable& em, const TokenSequence& y,
                             int k_max);

/// N-best duration sequences by left-to-right beam search over (u, r)
/// hypotheses. Partial hypotheses are ranked by accumulated forward
/// log-probability plus the exact best-completion score, so width 1
/// reproduces viterbi_best and a width covering the whole lattice is
/// exact. Results are sorted by score descending, ties lexicographic.
std::vector<ScoredDuration> nbest_beam(const EmissionTable& em,
                                       const TokenSequence& y, int k_max,
                                       int width);

/// Run lengths of the alignment: l_u = #Blanks in token u's span + 1.
/// Throws std::invalid_argument when a_1 is not Shift.
DurationSequence alignment_to_duration(const Alignment& a);

/// Exact inverse of alignment_to_duration.
Alignment duration_to_alignment(const DurationSequence& l);

/// Exhaustive list of duration sequences with sum t_super and every
/// element in [1, k_max], in lexicographic order. Guards against
/// instances with more than max_count sequences.
std::vector<DurationSequence> enumerate_valid(int t_super, int u_count,
                                              int k_max,
                                              std::uint64_t max_count = 1000000);

/// Number of sequences enumerate_valid would return (saturating).
std::uint64_t count_valid(int t_super, int u_count, int k_max);

/// Dimensions plus row-major (t, u, r) tables; -inf is emitted as the
/// string "-inf" so the document stays valid JSON.
std::string trellis_to_json(const Trellis& trellis);

}  // namespace latentdur
