#include "latentdur/trellis.hpp"

#include "latentdur/numeric.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace latentdur {

using nlohmann::json;

namespace {

void check_instance(const EmissionTable& em, const TokenSequence& y,
                    int k_max) {
  if (y.size() < 1)
    throw std::invalid_argument("trellis: token sequence is empty");
  if (em.num_steps() < 1)
    throw std::invalid_argument("trellis: emission table is empty");
  if (em.log_trans.rows() != em.log_emit.rows())
    throw std::invalid_argument(
        "trellis: log_trans and log_emit row counts differ");
  if (em.log_trans.cols() != 2)
    throw std::invalid_argument("trellis: log_trans must have 2 columns");
  if (k_max < 1) throw std::invalid_argument("trellis: k_max must be >= 1");
  for (int id : y.tokens) {
    if (id < 0 || id >= em.vocab())
      throw std::invalid_argument("trellis: token id outside vocabulary");
  }
}

Trellis make_trellis(int t_steps, int u_count, int k_max) {
  Trellis tr;
  tr.T = t_steps;
  tr.U = u_count;
  tr.K = k_max;
  tr.feasible = t_steps >= u_count &&
                static_cast<long long>(u_count) * k_max >= t_steps;
  return tr;
}

void fill_alpha(const EmissionTable& em, const TokenSequence& y, Trellis& tr) {
  const int T = tr.T, U = tr.U, K = tr.K;
  tr.log_alpha.assign(static_cast<std::size_t>(T) * U * K, kNegInf);
  auto& a = tr.log_alpha;
  const Matrix& lt = em.log_trans;
  const Matrix& le = em.log_emit;

  a[tr.index(0, 0, 0)] = lt(0, 1) + le(0, y.tokens[0]);
  for (int t = 1; t < T; ++t) {
    for (int u = 0; u < U; ++u) {
      const double emit = le(t, y.tokens[u]);
      if (u >= 1) {
        std::span<const double> prev(&a[tr.index(t - 1, u - 1, 0)],
                                     static_cast<std::size_t>(K));
        const double in = log_sum_exp(prev);
        if (in != kNegInf) a[tr.index(t, u, 0)] = in + lt(t, 1) + emit;
      }
      for (int r = 1; r < K; ++r) {
        const double prev = a[tr.index(t - 1, u, r - 1)];
        if (prev != kNegInf)
          a[tr.index(t, u, r)] = prev + lt(t, 0) + emit;
      }
    }
  }
}

void fill_beta(const EmissionTable& em, const TokenSequence& y, Trellis& tr) {
  const int T = tr.T, U = tr.U, K = tr.K;
  tr.log_beta.assign(static_cast<std::size_t>(T) * U * K, kNegInf);
  auto& b = tr.log_beta;
  const Matrix& lt = em.log_trans;
  const Matrix& le = em.log_emit;

  for (int r = 0; r < K; ++r) b[tr.index(T - 1, U - 1, r)] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int u = 0; u < U; ++u) {
      const double blank_emit = lt(t + 1, 0) + le(t + 1, y.tokens[u]);
      const double shift_emit =
          u + 1 < U ? lt(t + 1, 1) + le(t + 1, y.tokens[u + 1]) : kNegInf;
      for (int r = 0; r < K; ++r) {
        double acc = kNegInf;
        if (r + 1 < K) {
          const double cont = b[tr.index(t + 1, u, r + 1)];
          if (cont != kNegInf) acc = cont + blank_emit;
        }
        if (u + 1 < U) {
          const double next = b[tr.index(t + 1, u + 1, 0)];
          if (next != kNegInf) acc = log_add(acc, next + shift_emit);
        }
        b[tr.index(t, u, r)] = acc;
      }
    }
  }
}

// Best-completion score from each state, max instead of log-sum.
std::vector<double> fill_beta_max(const EmissionTable& em,
                                  const TokenSequence& y, const Trellis& tr) {
  const int T = tr.T, U = tr.U, K = tr.K;
  std::vector<double> b(static_cast<std::size_t>(T) * U * K, kNegInf);
  const Matrix& lt = em.log_trans;
  const Matrix& le = em.log_emit;

  for (int r = 0; r < K; ++r) b[tr.index(T - 1, U - 1, r)] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int u = 0; u < U; ++u) {
      const double blank_emit = lt(t + 1, 0) + le(t + 1, y.tokens[u]);
      const double shift_emit =
          u + 1 < U ? lt(t + 1, 1) + le(t + 1, y.tokens[u + 1]) : kNegInf;
      for (int r = 0; r < K; ++r) {
        double best = kNegInf;
        if (r + 1 < K) {
          const double cont = b[tr.index(t + 1, u, r + 1)];
          if (cont != kNegInf) best = cont + blank_emit;
        }
        if (u + 1 < U) {
          const double next = b[tr.index(t + 1, u + 1, 0)];
          if (next != kNegInf) best = std::max(best, next + shift_emit);
        }
        b[tr.index(t, u, r)] = best;
      }
    }
  }
  return b;
}

}  // namespace

ValidationReport EmissionTable::validate(double tol) const {
  ValidationReport r;
  auto check_rows = [&](const Matrix& m, const char* name) {
    std::vector<double> vals;
    for (int t = 0; t < m.rows(); ++t) {
      vals.resize(m.cols());
      for (int j = 0; j < m.cols(); ++j) vals[j] = m(t, j);
      const double lse = log_sum_exp(vals);
      if (!(std::abs(lse) <= tol)) {
        r.ok = false;
        r.index = t + 1;
        std::ostringstream os;
        os << name << " row " << (t + 1) << " log-sums to " << lse;
        r.message = os.str();
        return false;
      }
    }
    return true;
  };
  if (!check_rows(log_trans, "log_trans")) return r;
  check_rows(log_emit, "log_emit");
  return r;
}

Trellis forward(const EmissionTable& em, const TokenSequence& y, int k_max) {
  check_instance(em, y, k_max);
  Trellis tr = make_trellis(em.num_steps(), y.size(), k_max);
  fill_alpha(em, y, tr);
  return tr;
}

Trellis backward(const EmissionTable& em, const TokenSequence& y, int k_max) {
  check_instance(em, y, k_max);
  Trellis tr = make_trellis(em.num_steps(), y.size(), k_max);
  fill_beta(em, y, tr);
  return tr;
}

Trellis forward_backward(const EmissionTable& em, const TokenSequence& y,
                         int k_max) {
  check_instance(em, y, k_max);
  Trellis tr = make_trellis(em.num_steps(), y.size(), k_max);
  fill_alpha(em, y, tr);
  fill_beta(em, y, tr);
  tr.reachable.assign(tr.log_alpha.size(), 0);
  for (std::size_t i = 0; i < tr.log_alpha.size(); ++i) {
    tr.reachable[i] =
        tr.log_alpha[i] != kNegInf && tr.log_beta[i] != kNegInf ? 1 : 0;
  }
  return tr;
}

double log_marginal(const Trellis& trellis) {
  if (trellis.log_alpha.empty())
    throw std::logic_error("log_marginal: forward table not filled");
  std::span<const double> terminal(
      &trellis.log_alpha[trellis.index(trellis.T - 1, trellis.U - 1, 0)],
      static_cast<std::size_t>(trellis.K));
  return log_sum_exp(terminal);
}

MarginalGradient marginal_gradient(const EmissionTable& em,
                                   const TokenSequence& y, int k_max) {
  const Trellis tr = forward_backward(em, y, k_max);
  const double lz = log_marginal(tr);
  if (!std::isfinite(lz))
    throw InfeasibleError("marginal_gradient: no valid alignment path");

  MarginalGradient g;
  g.log_marginal = lz;
  g.d_log_trans = Matrix::Zero(tr.T, 2);
  g.d_log_emit = Matrix::Zero(tr.T, em.vocab());
  for (int t = 0; t < tr.T; ++t) {
    for (int u = 0; u < tr.U; ++u) {
      for (int r = 0; r < tr.K; ++r) {
        const double la = tr.alpha(t, u, r);
        if (la == kNegInf) continue;
        const double lb = tr.beta(t, u, r);
        if (lb == kNegInf) continue;
        const double occ = std::exp(la + lb - lz);
        g.d_log_trans(t, r == 0 ? 1 : 0) += occ;
        g.d_log_emit(t, y.tokens[u]) += occ;
      }
    }
  }
  return g;
}

ScoredAlignment viterbi_best(const EmissionTable& em, const TokenSequence& y,
                             int k_max) {
  check_instance(em, y, k_max);
  const int T = em.num_steps(), U = y.size(), K = k_max;
  if (!(T >= U && static_cast<long long>(U) * K >= T)) {
    std::ostringstream os;
    os << "viterbi_best: no valid alignment for T'=" << T << ", U=" << U
       << ", K=" << K;
    throw InfeasibleError(os.str());
  }
  const Matrix& lt = em.log_trans;
  const Matrix& le = em.log_emit;
  const auto idx = [U, K](int t, int u, int r) { return (t * U + u) * K + r; };

  // Each state keeps its best score plus the duration prefix realizing
  // it, so score ties resolve to the lexicographically smallest
  // durations (the path whose next Shift comes earliest).
  std::vector<double> score(static_cast<std::size_t>(T) * U * K, kNegInf);
  std::vector<std::vector<int>> prefix(score.size());
  score[idx(0, 0, 0)] = lt(0, 1) + le(0, y.tokens[0]);
  prefix[idx(0, 0, 0)] = {1};

  for (int t = 1; t < T; ++t) {
    for (int u = 0; u < U; ++u) {
      const double emit = le(t, y.tokens[u]);
      if (u >= 1) {
        int best_r = -1;
        double best = kNegInf;
        for (int r = 0; r < K; ++r) {
          const double s = score[idx(t - 1, u - 1, r)];
          if (s == kNegInf) continue;
          if (s > best ||
              (s == best && prefix[idx(t - 1, u - 1, r)] <
                                prefix[idx(t - 1, u - 1, best_r)])) {
            best = s;
            best_r = r;
          }
        }
        if (best_r >= 0) {
          score[idx(t, u, 0)] = best + lt(t, 1) + emit;
          auto& p = prefix[idx(t, u, 0)];
          p = prefix[idx(t - 1, u - 1, best_r)];
          p.push_back(1);
        }
      }
      for (int r = 1; r < K; ++r) {
        const double prev = score[idx(t - 1, u, r - 1)];
        if (prev == kNegInf) continue;
        score[idx(t, u, r)] = prev + lt(t, 0) + emit;
        auto& p = prefix[idx(t, u, r)];
        p = prefix[idx(t - 1, u, r - 1)];
        p.back() += 1;
      }
    }
  }

  int best_r = -1;
  double best = kNegInf;
  for (int r = 0; r < K; ++r) {
    const double s = score[idx(T - 1, U - 1, r)];
    if (s == kNegInf) continue;
    if (s > best || (s == best && prefix[idx(T - 1, U - 1, r)] <
                                      prefix[idx(T - 1, U - 1, best_r)])) {
      best = s;
      best_r = r;
    }
  }
  if (best_r < 0)
    throw InfeasibleError("viterbi_best: no valid alignment path");

  ScoredAlignment result;
  result.log_score = best;
  result.alignment =
      duration_to_alignment(DurationSequence{prefix[idx(T - 1, U - 1, best_r)]});
  return result;
}

std::vector<ScoredDuration> nbest_beam(const EmissionTable& em,
                                       const TokenSequence& y, int k_max,
                                       int width) {
  check_instance(em, y, k_max);
  if (width < 1) throw std::invalid_argument("nbest_beam: width must be >= 1");
  const int T = em.num_steps(), U = y.size(), K = k_max;
  if (!(T >= U && static_cast<long long>(U) * K >= T)) {
    std::ostringstream os;
    os << "nbest_beam: no valid alignment for T'=" << T << ", U=" << U
       << ", K=" << K;
    throw InfeasibleError(os.str());
  }

  Trellis shape = make_trellis(T, U, K);
  const std::vector<double> completion = fill_beta_max(em, y, shape);
  const auto idx = [U, K](int t, int u, int r) { return (t * U + u) * K + r; };
  const Matrix& lt = em.log_trans;
  const Matrix& le = em.log_emit;

  struct Hyp {
    int u = 0;
    int r = 0;
    double acc = 0.0;
    std::vector<int> prefix;
  };
  std::vector<Hyp> beam;
  if (completion[idx(0, 0, 0)] != kNegInf) {
    beam.push_back({0, 0, lt(0, 1) + le(0, y.tokens[0]), {1}});
  }

  const auto prune = [&](std::vector<Hyp>& hyps, int t) {
    std::sort(hyps.begin(), hyps.end(), [&](const Hyp& a, const Hyp& b) {
      const double pa = a.acc + completion[idx(t, a.u, a.r)];
      const double pb = b.acc + completion[idx(t, b.u, b.r)];
      if (pa != pb) return pa > pb;
      return a.prefix < b.prefix;
    });
    if (static_cast<int>(hyps.size()) > width) hyps.resize(width);
  };
  prune(beam, 0);

  for (int t = 1; t < T; ++t) {
    std::vector<Hyp> next;
    next.reserve(beam.size() * 2);
    for (const Hyp& h : beam) {
      if (h.r + 1 < K && completion[idx(t, h.u, h.r + 1)] != kNegInf) {
        Hyp e = h;
        e.r = h.r + 1;
        e.acc = h.acc + lt(t, 0) + le(t, y.tokens[h.u]);
        e.prefix.back() += 1;
        next.push_back(std::move(e));
      }
      if (h.u + 1 < U && completion[idx(t, h.u + 1, 0)] != kNegInf) {
        Hyp e = h;
        e.u = h.u + 1;
        e.r = 0;
        e.acc = h.acc + lt(t, 1) + le(t, y.tokens[h.u + 1]);
        e.prefix.push_back(1);
        next.push_back(std::move(e));
      }
    }
    prune(next, t);
    beam = std::move(next);
  }

  std::vector<ScoredDuration> results;
  results.reserve(beam.size());
  for (Hyp& h : beam) {
    if (h.u != U - 1) continue;
    results.push_back({DurationSequence{std::move(h.prefix)}, h.acc});
  }
  std::sort(results.begin(), results.end(),
            [](const ScoredDuration& a, const ScoredDuration& b) {
              if (a.log_score != b.log_score) return a.log_score > b.log_score;
              return a.durations.durations < b.durations.durations;
            });
  if (static_cast<int>(results.size()) > width) results.resize(width);
  if (results.empty())
    throw InfeasibleError("nbest_beam: no valid alignment path");
  return results;
}

DurationSequence alignment_to_duration(const Alignment& a) {
  if (a.size() < 1)
    throw std::invalid_argument("alignment_to_duration: empty alignment");
  if (a.transitions[0] != Transition::Shift)
    throw std::invalid_argument("alignment_to_duration: a_1 must be Shift");
  DurationSequence d;
  for (const Transition tr : a.transitions) {
    if (tr == Transition::Shift)
      d.durations.push_back(1);
    else
      d.durations.back() += 1;
  }
  return d;
}

Alignment duration_to_alignment(const DurationSequence& l) {
  Alignment a;
  a.transitions.reserve(static_cast<std::size_t>(std::max(0, l.total())));
  for (const int dur : l.durations) {
    if (dur < 1)
      throw std::invalid_argument("duration_to_alignment: duration < 1");
    a.transitions.push_back(Transition::Shift);
    for (int i = 1; i < dur; ++i) a.transitions.push_back(Transition::Blank);
  }
  return a;
}

std::uint64_t count_valid(int t_super, int u_count, int k_max) {
  if (t_super < 0 || u_count < 0 || k_max < 1) return 0;
  constexpr std::uint64_t kCap = std::uint64_t(1) << 62;
  // counts[t] = #sequences of the current number of parts summing to t
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(t_super) + 1, 0);
  counts[0] = 1;
  for (int u = 0; u < u_count; ++u) {
    std::vector<std::uint64_t> next(counts.size(), 0);
    for (int t = 0; t <= t_super; ++t) {
      if (counts[t] == 0) continue;
      for (int l = 1; l <= k_max && t + l <= t_super; ++l) {
        next[t + l] = std::min(kCap, next[t + l] + counts[t]);
      }
    }
    counts = std::move(next);
  }
  return counts[t_super];
}

std::vector<DurationSequence> enumerate_valid(int t_super, int u_count,
                                              int k_max,
                                              std::uint64_t max_count) {
  if (u_count < 0 || k_max < 1)
    throw std::invalid_argument("enumerate_valid: bad instance");
  if (count_valid(t_super, u_count, k_max) > max_count)
    throw std::invalid_argument("enumerate_valid: instance too large");

  std::vector<DurationSequence> out;
  std::vector<int> current;
  const std::function<void(int, int)> recurse = [&](int remaining, int parts) {
    if (parts == 0) {
      if (remaining == 0) out.push_back(DurationSequence{current});
      return;
    }
    for (int l = 1; l <= k_max; ++l) {
      const int rest = remaining - l;
      if (rest < parts - 1 || rest > static_cast<long long>(parts - 1) * k_max)
        continue;
      current.push_back(l);
      recurse(rest, parts - 1);
      current.pop_back();
    }
  };
  recurse(t_super, u_count);
  return out;
}

std::string trellis_to_json(const Trellis& trellis) {
  const auto table_to_json = [](const std::vector<double>& v) {
    json arr = json::array();
    for (const double x : v) {
      if (std::isfinite(x))
        arr.push_back(x);
      else
        arr.push_back("-inf");
    }
    return arr;
  };
  json j;
  j["T"] = trellis.T;
  j["U"] = trellis.U;
  j["K"] = trellis.K;
  j["feasible"] = trellis.feasible;
  j["layout"] = "row-major (t, u, r)";
  j["log_alpha"] = table_to_json(trellis.log_alpha);
  j["log_beta"] = table_to_json(trellis.log_beta);
  if (!trellis.reachable.empty()) {
    json arr = json::array();
    for (const auto m : trellis.reachable) arr.push_back(static_cast<int>(m));
    j["reachable"] = arr;
  }
  return j.dump();
}

}  // namespace latentdur
