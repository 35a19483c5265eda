#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latentdur/checks.hpp"
#include "latentdur/models.hpp"
#include "latentdur/numeric.hpp"
#include "latentdur/trellis.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

using namespace latentdur;

namespace {

// Uniform transitions (0.5 each), single-token vocabulary (emit = 1).
EmissionTable uniform_table(int t_steps) {
  EmissionTable em;
  em.log_trans = Matrix::Constant(t_steps, 2, std::log(0.5));
  em.log_emit = Matrix::Zero(t_steps, 1);
  return em;
}

TokenSequence ones(int u_count) {
  TokenSequence y;
  y.tokens.assign(u_count, 0);
  return y;
}

Vector flatten_tables(const EmissionTable& em) {
  Vector v(em.log_trans.size() + em.log_emit.size());
  int at = 0;
  for (int t = 0; t < em.log_trans.rows(); ++t)
    for (int c = 0; c < 2; ++c) v[at++] = em.log_trans(t, c);
  for (int t = 0; t < em.log_emit.rows(); ++t)
    for (int c = 0; c < em.log_emit.cols(); ++c) v[at++] = em.log_emit(t, c);
  return v;
}

EmissionTable unflatten_tables(const Vector& v, int t_steps, int vocab) {
  EmissionTable em;
  em.log_trans.resize(t_steps, 2);
  em.log_emit.resize(t_steps, vocab);
  int at = 0;
  for (int t = 0; t < t_steps; ++t)
    for (int c = 0; c < 2; ++c) em.log_trans(t, c) = v[at++];
  for (int t = 0; t < t_steps; ++t)
    for (int c = 0; c < vocab; ++c) em.log_emit(t, c) = v[at++];
  return em;
}

}  // namespace

TEST_CASE("forward: single valid path T'=2 U=1 K=2") {
  const Trellis tr = forward(uniform_table(2), ones(1), 2);
  CHECK(tr.feasible);
  CHECK(log_marginal(tr) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("forward: two paths T'=3 U=2 K=2 under uniform probabilities") {
  const Trellis tr = forward(uniform_table(3), ones(2), 2);
  CHECK(std::exp(log_marginal(tr)) == doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("forward: T'=U forces the all-Shift path") {
  std::mt19937_64 rng(1);
  const EmissionTable em = random_emissions(4, 3, rng);
  const TokenSequence y{{0, 2, 1, 0}};
  const Trellis tr = forward(em, y, 3);
  double expected = 0.0;
  for (int t = 0; t < 4; ++t)
    expected += em.log_trans(t, 1) + em.log_emit(t, y.tokens[t]);
  CHECK(log_marginal(tr) == doctest::Approx(expected).epsilon(1e-13));

  const std::vector<DurationSequence> all = enumerate_valid(4, 4, 3);
  REQUIRE(all.size() == 1);
  CHECK(all[0].durations == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("backward: terminal states are zero") {
  const Trellis tr = backward(uniform_table(3), ones(2), 2);
  for (int r = 0; r < 2; ++r) CHECK(tr.beta(2, 1, r) == 0.0);

  const Trellis tiny = backward(uniform_table(1), ones(1), 1);
  CHECK(tiny.beta(0, 0, 0) == 0.0);
}

TEST_CASE("backward: posterior consistency at every time step") {
  const Trellis tr = forward_backward(uniform_table(3), ones(2), 2);
  const double lm = log_marginal(tr);
  for (int t = 0; t < 3; ++t) {
    double mass = 0.0;
    for (int u = 0; u < 2; ++u) {
      for (int r = 0; r < 2; ++r) {
        const double la = tr.alpha(t, u, r);
        const double lb = tr.beta(t, u, r);
        if (la != kNegInf && lb != kNegInf) mass += std::exp(la + lb);
      }
    }
    CHECK(mass == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(std::exp(lm) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("posterior consistency on random instances") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 4);
    const int k_max = 1 + static_cast<int>(rng() % 4);
    const int t_hi = std::min(8, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 4);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    const Trellis tr = forward_backward(em, y, k_max);
    const double lm = log_marginal(tr);
    for (int t = 0; t < t_steps; ++t) {
      std::vector<double> vals;
      for (int u = 0; u < u_count; ++u)
        for (int r = 0; r < k_max; ++r) {
          const double la = tr.alpha(t, u, r);
          const double lb = tr.beta(t, u, r);
          if (la != kNegInf && lb != kNegInf) vals.push_back(la + lb);
        }
      CHECK(std::abs(log_sum_exp(vals) - lm) <= 1e-8);
    }
  }
}

TEST_CASE("log_marginal of an infeasible instance is -inf") {
  CHECK(log_marginal(forward(uniform_table(5), ones(1), 3)) == kNegInf);
  CHECK(log_marginal(forward(uniform_table(2), ones(3), 2)) == kNegInf);
}

TEST_CASE("exp(log_marginal) equals the brute-force path sum") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 4);
    const int k_max = 1 + static_cast<int>(rng() % 4);
    const int t_hi = std::min(8, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 4);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    double mass = 0.0;
    for (const ScoredDuration& sd : brute_force_nbest(em, y, k_max))
      mass += std::exp(sd.log_score);
    const double lm = log_marginal(forward(em, y, k_max));
    CHECK(std::abs(std::exp(lm) - mass) / mass <= 1e-10);
  }
}

TEST_CASE("marginal_gradient of a single-path instance is one on the path") {
  const MarginalGradient g = marginal_gradient(uniform_table(2), ones(1), 2);
  CHECK(g.d_log_trans(0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // Shift
  CHECK(g.d_log_trans(0, 0) == 0.0);
  CHECK(g.d_log_trans(1, 0) == doctest::Approx(1.0).epsilon(1e-12));  // Blank
  CHECK(g.d_log_trans(1, 1) == 0.0);
  CHECK(g.d_log_emit(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.d_log_emit(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("marginal_gradient splits evenly over two symmetric paths") {
  const MarginalGradient g = marginal_gradient(uniform_table(3), ones(2), 2);
  // Path (1,2) shifts at t=2; path (2,1) blanks there. Equal mass.
  CHECK(g.d_log_trans(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.d_log_trans(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.d_log_trans(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.d_log_trans(2, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.d_log_trans(2, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("marginal_gradient matches finite differences") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 3);
    const int k_max = 1 + static_cast<int>(rng() % 3);
    const int t_hi = std::min(6, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 3);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    const MarginalGradient g = marginal_gradient(em, y, k_max);
    Vector analytic(g.d_log_trans.size() + g.d_log_emit.size());
    int at = 0;
    for (int t = 0; t < t_steps; ++t)
      for (int c = 0; c < 2; ++c) analytic[at++] = g.d_log_trans(t, c);
    for (int t = 0; t < t_steps; ++t)
      for (int c = 0; c < vocab; ++c) analytic[at++] = g.d_log_emit(t, c);

    const auto f = [&](const Vector& flat) {
      return log_marginal(
          forward(unflatten_tables(flat, t_steps, vocab), y, k_max));
    };
    CHECK(finite_diff_check(f, flatten_tables(em), analytic, 1e-5) <= 1e-6);
  }
}

TEST_CASE("viterbi_best finds the single valid path") {
  const ScoredAlignment best = viterbi_best(uniform_table(2), ones(1), 2);
  CHECK(best.alignment.transitions ==
        std::vector<Transition>{Transition::Shift, Transition::Blank});
  CHECK(best.log_score == doctest::Approx(std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("viterbi_best defers the shift when Blank dominates at t=2") {
  EmissionTable em = uniform_table(3);
  em.log_trans(1, 0) = std::log(0.9);
  em.log_trans(1, 1) = std::log(0.1);
  const ScoredAlignment best = viterbi_best(em, ones(2), 2);
  CHECK(alignment_to_duration(best.alignment).durations ==
        std::vector<int>{2, 1});

  const std::vector<ScoredDuration> brute = brute_force_nbest(em, ones(2), 2);
  CHECK(best.log_score == doctest::Approx(brute.front().log_score));
  CHECK(alignment_to_duration(best.alignment).durations ==
        brute.front().durations.durations);
}

TEST_CASE("viterbi_best breaks exact ties toward the earlier Shift") {
  // Both paths of the uniform T'=3, U=2 instance score identically;
  // (1,2) shifts earlier than (2,1).
  const ScoredAlignment best = viterbi_best(uniform_table(3), ones(2), 2);
  CHECK(alignment_to_duration(best.alignment).durations ==
        std::vector<int>{1, 2});
}

TEST_CASE("viterbi_best matches the enumeration argmax on random instances") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 4);
    const int k_max = 1 + static_cast<int>(rng() % 4);
    const int t_hi = std::min(8, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 4);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    const ScoredAlignment best = viterbi_best(em, y, k_max);
    const std::vector<ScoredDuration> brute = brute_force_nbest(em, y, k_max);
    CHECK(best.log_score == brute.front().log_score);
    CHECK(alignment_to_duration(best.alignment).durations ==
          brute.front().durations.durations);
  }
}

TEST_CASE("viterbi_best reports infeasible instances") {
  CHECK_THROWS_AS(viterbi_best(uniform_table(5), ones(1), 3), InfeasibleError);
  CHECK_THROWS_AS(nbest_beam(uniform_table(5), ones(1), 3, 2),
                  InfeasibleError);
}

TEST_CASE("nbest_beam width 1 equals viterbi_best") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 4);
    const int k_max = 1 + static_cast<int>(rng() % 4);
    const int t_hi = std::min(9, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 4);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    const std::vector<ScoredDuration> top = nbest_beam(em, y, k_max, 1);
    REQUIRE(top.size() == 1);
    const ScoredAlignment vit = viterbi_best(em, y, k_max);
    CHECK(top[0].durations.durations ==
          alignment_to_duration(vit.alignment).durations);
    CHECK(top[0].log_score == vit.log_score);
  }
}

TEST_CASE("nbest_beam with a covering width is the exact sorted list") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 4);
    const int k_max = 1 + static_cast<int>(rng() % 4);
    const int t_hi = std::min(8, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const int vocab = 1 + static_cast<int>(rng() % 4);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % vocab));
    const EmissionTable em = random_emissions(t_steps, vocab, rng);

    const std::vector<ScoredDuration> brute = brute_force_nbest(em, y, k_max);
    const std::vector<ScoredDuration> beam =
        nbest_beam(em, y, k_max, static_cast<int>(brute.size()) + 3);
    REQUIRE(beam.size() == brute.size());
    for (std::size_t i = 0; i < beam.size(); ++i) {
      CHECK(beam[i].durations.durations == brute[i].durations.durations);
      CHECK(std::abs(beam[i].log_score - brute[i].log_score) <= 1e-12);
    }
  }
}

TEST_CASE("nbest_beam returns both symmetric paths with equal scores") {
  const std::vector<ScoredDuration> top =
      nbest_beam(uniform_table(3), ones(2), 2, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].durations.durations == std::vector<int>{1, 2});
  CHECK(top[1].durations.durations == std::vector<int>{2, 1});
  CHECK(top[0].log_score == top[1].log_score);
}

TEST_CASE("every beam output passes validate_duration") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 5);
    const int k_max = 1 + static_cast<int>(rng() % 5);
    const int t_hi = std::min(14, u_count * k_max);
    const int t_steps =
        u_count + static_cast<int>(rng() % (t_hi - u_count + 1));
    const EmissionTable em = random_emissions(t_steps, 3, rng);
    TokenSequence y;
    for (int u = 0; u < u_count; ++u)
      y.tokens.push_back(static_cast<int>(rng() % 3));
    for (const ScoredDuration& sd : nbest_beam(em, y, k_max, 4)) {
      CHECK(validate_duration(sd.durations, u_count, t_steps, k_max).ok);
    }
  }
}

TEST_CASE("alignment_to_duration worked examples") {
  using T = Transition;
  const Alignment a{{T::Shift, T::Blank, T::Shift, T::Blank, T::Blank}};
  CHECK(alignment_to_duration(a).durations == std::vector<int>{2, 3});

  const Alignment all_shift{{T::Shift, T::Shift, T::Shift}};
  CHECK(alignment_to_duration(all_shift).durations ==
        std::vector<int>{1, 1, 1});

  const Alignment one{{T::Shift, T::Blank, T::Blank}};
  CHECK(alignment_to_duration(one).durations == std::vector<int>{3});
}

TEST_CASE("alignment_to_duration rejects malformed alignments") {
  CHECK_THROWS_AS(
      alignment_to_duration(Alignment{{Transition::Blank, Transition::Shift}}),
      std::invalid_argument);
  CHECK_THROWS_AS(alignment_to_duration(Alignment{}), std::invalid_argument);
}

TEST_CASE("duration_to_alignment worked examples") {
  using T = Transition;
  CHECK(duration_to_alignment(DurationSequence{{2, 3}}).transitions ==
        std::vector<T>{T::Shift, T::Blank, T::Shift, T::Blank, T::Blank});
  CHECK(duration_to_alignment(DurationSequence{{1}}).transitions ==
        std::vector<T>{T::Shift});
}

TEST_CASE("alignment and duration conversions round-trip") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 6);
    DurationSequence l;
    for (int u = 0; u < u_count; ++u)
      l.durations.push_back(1 + static_cast<int>(rng() % 5));
    CHECK(alignment_to_duration(duration_to_alignment(l)).durations ==
          l.durations);
  }
}

TEST_CASE("enumerate_valid worked examples") {
  const std::vector<DurationSequence> small = enumerate_valid(3, 2, 2);
  REQUIRE(small.size() == 2);
  CHECK(small[0].durations == std::vector<int>{1, 2});
  CHECK(small[1].durations == std::vector<int>{2, 1});

  CHECK(enumerate_valid(4, 4, 3).size() == 1);
  CHECK(enumerate_valid(6, 3, 3).size() == 7);
  CHECK(count_valid(6, 3, 3) == 7);
  CHECK(enumerate_valid(5, 1, 3).empty());
}

TEST_CASE("enumerate_valid guards against huge instances") {
  CHECK_THROWS_AS(enumerate_valid(60, 30, 13), std::invalid_argument);
  CHECK(count_valid(60, 30, 13) > 1000000);
}

TEST_CASE("EmissionTable validation") {
  std::mt19937_64 rng(10);
  const EmissionTable good = random_emissions(4, 3, rng);
  CHECK(good.validate());

  EmissionTable bad = good;
  bad.log_emit(2, 0) += 0.5;
  const ValidationReport report = bad.validate();
  CHECK_FALSE(report.ok);
  CHECK(report.index == 3);
}

TEST_CASE("trellis JSON dump uses the string -inf") {
  const Trellis tr = forward_backward(uniform_table(3), ones(2), 2);
  const nlohmann::json j = nlohmann::json::parse(trellis_to_json(tr));
  CHECK(j.at("T").get<int>() == 3);
  CHECK(j.at("U").get<int>() == 2);
  CHECK(j.at("K").get<int>() == 2);
  CHECK(j.at("feasible").get<bool>());
  const auto& alpha = j.at("log_alpha");
  REQUIRE(alpha.size() == 3 * 2 * 2);
  bool saw_string = false;
  for (const auto& v : alpha) {
    if (v.is_string()) {
      CHECK(v.get<std::string>() == "-inf");
      saw_string = true;
    } else {
      CHECK(v.is_number());
    }
  }
  CHECK(saw_string);  // state (t=0, u=1) is unreachable
}
