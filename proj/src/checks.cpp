#include "latentdur/checks.hpp"

#include "latentdur/losses.hpp"
#include "latentdur/models.hpp"
#include "latentdur/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace latentdur {

namespace {

Matrix log_softmax_rows(Matrix logits) {
  for (int t = 0; t < logits.rows(); ++t) {
    const double m = logits.row(t).maxCoeff();
    logits.row(t).array() -= m + std::log((logits.row(t).array() - m).exp().sum());
  }
  return logits;
}

Matrix random_matrix(int rows, int cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * unit(rng);
  return m;
}

Vector random_vector(int n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * unit(rng);
  return v;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

TokenSequence random_tokens(int u_count, int vocab, std::mt19937_64& rng) {
  TokenSequence y;
  y.tokens.resize(u_count);
  for (int& t : y.tokens) t = uniform_int(rng, 0, vocab - 1);
  return y;
}

struct RandomInstance {
  EmissionTable em;
  TokenSequence y;
  int k_max = 1;
};

RandomInstance random_instance(std::mt19937_64& rng, int max_t, int max_u,
                               int max_k, int max_v) {
  RandomInstance inst;
  const int u_count = uniform_int(rng, 1, max_u);
  inst.k_max = uniform_int(rng, 1, max_k);
  const int t_hi = std::min(max_t, u_count * inst.k_max);
  const int t_steps = uniform_int(rng, u_count, std::max(u_count, t_hi));
  const int vocab = uniform_int(rng, 1, max_v);
  inst.y = random_tokens(u_count, vocab, rng);
  inst.em = random_emissions(t_steps, vocab, rng);
  return inst;
}

CheckResult make_result(const std::string& name, bool pass,
                        const std::string& detail) {
  return CheckResult{name, pass, detail};
}

CheckResult error_bound_result(const std::string& name, double worst,
                               double bound) {
  std::ostringstream os;
  os << "max error " << worst << " (bound " << bound << ")";
  return make_result(name, worst <= bound, os.str());
}

}  // namespace

EmissionTable random_emissions(int t_steps, int vocab, std::mt19937_64& rng) {
  EmissionTable em;
  em.log_trans = log_softmax_rows(random_matrix(t_steps, 2, 1.5, rng));
  em.log_emit = log_softmax_rows(random_matrix(t_steps, vocab, 1.5, rng));
  return em;
}

double path_log_score(const EmissionTable& em, const TokenSequence& y,
                      const DurationSequence& l) {
  const Alignment a = duration_to_alignment(l);
  if (a.size() != em.num_steps())
    throw std::invalid_argument("path_log_score: length mismatch");
  double score = 0.0;
  int u = -1;
  for (int t = 0; t < a.size(); ++t) {
    const bool shift = a.transitions[t] == Transition::Shift;
    if (shift) ++u;
    score = score + em.log_trans(t, shift ? 1 : 0);
    score = score + em.log_emit(t, y.tokens[u]);
  }
  return score;
}

std::vector<ScoredDuration> brute_force_nbest(const EmissionTable& em,
                                              const TokenSequence& y,
                                              int k_max) {
  std::vector<ScoredDuration> out;
  for (DurationSequence& l :
       enumerate_valid(em.num_steps(), y.size(), k_max)) {
    const double score = path_log_score(em, y, l);
    out.push_back({std::move(l), score});
  }
  std::sort(out.begin(), out.end(),
            [](const ScoredDuration& a, const ScoredDuration& b) {
              if (a.log_score != b.log_score) return a.log_score > b.log_score;
              return a.durations.durations < b.durations.durations;
            });
  return out;
}

std::vector<CheckResult> run_oracle_equivalence(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst_marginal = 0.0;
  double worst_viterbi = 0.0;
  bool nbest_ok = true;
  std::string nbest_detail = "exact on all instances";

  for (int trial = 0; trial < 200; ++trial) {
    const RandomInstance inst = random_instance(rng, 8, 4, 4, 4);
    const std::vector<ScoredDuration> brute =
        brute_force_nbest(inst.em, inst.y, inst.k_max);

    double mass = 0.0;
    for (const ScoredDuration& sd : brute) mass += std::exp(sd.log_score);
    const double lm = log_marginal(forward(inst.em, inst.y, inst.k_max));
    worst_marginal =
        std::max(worst_marginal, std::abs(std::exp(lm) - mass) / mass);

    const ScoredAlignment vit = viterbi_best(inst.em, inst.y, inst.k_max);
    const double viterbi_err =
        std::abs(vit.log_score - brute.front().log_score) /
        std::max(1.0, std::abs(brute.front().log_score));
    worst_viterbi = std::max(worst_viterbi, viterbi_err);
    if (alignment_to_duration(vit.alignment).durations !=
        brute.front().durations.durations) {
      worst_viterbi = 1.0;
    }

    const std::vector<ScoredDuration> beam = nbest_beam(
        inst.em, inst.y, inst.k_max, static_cast<int>(brute.size()));
    if (beam.size() != brute.size()) {
      nbest_ok = false;
      nbest_detail = "n-best list size mismatch";
    } else {
      for (std::size_t i = 0; i < beam.size(); ++i) {
        if (beam[i].durations.durations != brute[i].durations.durations ||
            std::abs(beam[i].log_score - brute[i].log_score) > 1e-10) {
          nbest_ok = false;
          nbest_detail = "n-best entry differs from enumeration";
        }
      }
    }
  }

  std::vector<CheckResult> results;
  results.push_back(error_bound_result(
      "oracle: marginal vs enumeration (200 instances)", worst_marginal,
      1e-10));
  results.push_back(error_bound_result(
      "oracle: viterbi vs enumeration argmax", worst_viterbi, 1e-10));
  results.push_back(
      make_result("oracle: n-best vs exact sorted enumeration", nbest_ok,
                  nbest_detail));
  return results;
}

namespace {

// Stop-gradient branch value: every squared distance ||p - q||^2 is
// evaluated as base + coeff * (moved - base), which pins the frozen
// side and scales the active side's variation, so central differences
// reproduce the sg-decomposed gradient.
double blend(double moved, double base, double coeff) {
  return base + coeff * (moved - base);
}

double prior_branch_value(const Matrix& c_active, const Matrix& c_base,
                          const Matrix& cb_active, const Matrix& cb_base,
                          const DurationSequence& l, double alpha,
                          double beta) {
  double value = 0.0;
  const int k_count = static_cast<int>(cb_base.rows());
  std::vector<double> neg(k_count);
  for (int u = 0; u < c_base.rows(); ++u) {
    const int sel = l.durations[u] - 1;
    const auto occurrence = [&](int k) {
      const double base = (c_base.row(u) - cb_base.row(k)).squaredNorm();
      const double a_moved = (c_active.row(u) - cb_base.row(k)).squaredNorm();
      const double b_moved = (c_base.row(u) - cb_active.row(k)).squaredNorm();
      return blend(a_moved, base, alpha) + blend(b_moved, base, beta) - base;
    };
    for (int k = 0; k < k_count; ++k) neg[k] = -occurrence(k);
    value += occurrence(sel) + log_sum_exp(neg);
  }
  return value;
}

double vq_branch_value(const Matrix& d_active, const Matrix& d_base,
                       const Matrix& cb_active, const Matrix& cb_base,
                       const DurationSequence& l, double sigma, double alpha,
                       double beta) {
  const double scale = 1.0 / (2.0 * sigma * sigma);
  double value = 0.0;
  for (int u = 0; u < d_base.rows(); ++u) {
    const int sel = l.durations[u] - 1;
    const double base = (d_base.row(u) - cb_base.row(sel)).squaredNorm();
    const double a_moved = (d_active.row(u) - cb_base.row(sel)).squaredNorm();
    const double b_moved = (d_base.row(u) - cb_active.row(sel)).squaredNorm();
    value +=
        scale * (blend(a_moved, base, alpha) + blend(b_moved, base, beta) -
                 base);
  }
  return value;
}

Matrix unflatten(const Vector& v, int rows, int cols) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
  return m;
}

Vector flatten(const Matrix& m) {
  Vector v(m.size());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v[r * m.cols() + c] = m(r, c);
  return v;
}

DurationSequence random_durations(int u_count, int k_max,
                                  std::mt19937_64& rng) {
  DurationSequence l;
  l.durations.resize(u_count);
  for (int& d : l.durations) d = uniform_int(rng, 1, k_max);
  return l;
}

ModelSpec random_model_spec(std::mt19937_64& rng) {
  ModelSpec s;
  s.V = uniform_int(rng, 2, 4);
  s.E = uniform_int(rng, 2, 3);
  s.H = uniform_int(rng, 3, 5);
  s.O = uniform_int(rng, 2, 3);
  s.D = uniform_int(rng, 2, 3);
  s.g = uniform_int(rng, 1, 2);
  s.K = uniform_int(rng, 2, 3);
  return s;
}

}  // namespace

std::vector<CheckResult> run_gradient_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coeff_dist(0.1, 1.5);
  const double eps = 1e-5;
  std::vector<CheckResult> results;

  // sg_sqdist, both branches.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int n = uniform_int(rng, 1, 6);
      const Vector a = random_vector(n, 1.0, rng);
      const Vector b = random_vector(n, 1.0, rng);
      const SgCoeffs sg{coeff_dist(rng), coeff_dist(rng)};
      const SqDistResult res = sg_sqdist(a, b, sg);
      const auto fa = [&](const Vector& av) {
        return blend((av - b).squaredNorm(), res.value, sg.alpha);
      };
      const auto fb = [&](const Vector& bv) {
        return blend((a - bv).squaredNorm(), res.value, sg.beta);
      };
      worst = std::max(worst, finite_diff_check(fa, a, res.grad_a, eps));
      worst = std::max(worst, finite_diff_check(fb, b, res.grad_b, eps));
    }
    results.push_back(
        error_bound_result("gradients: sg_sqdist branches", worst, 1e-5));
  }

  // decoder_nll w.r.t. mu.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int t_frames = uniform_int(rng, 1, 4);
      const int o_dim = uniform_int(rng, 1, 4);
      FrameSequence x{random_matrix(t_frames, o_dim, 1.0, rng)};
      const Matrix mu = random_matrix(t_frames, o_dim, 1.0, rng);
      const double sigma_d = 0.5 + 3.0 * coeff_dist(rng);
      const DecoderNllResult res = decoder_nll(x, mu, sigma_d);
      const auto f = [&](const Vector& flat) {
        return decoder_nll(x, unflatten(flat, t_frames, o_dim), sigma_d).value;
      };
      worst = std::max(
          worst, finite_diff_check(f, flatten(mu), flatten(res.grad_mu), eps));
    }
    results.push_back(
        error_bound_result("gradients: decoder_nll", worst, 1e-5));
  }

  // prior_kl, both branches, generic coefficients.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int u_count = uniform_int(rng, 1, 3);
      const int k_count = uniform_int(rng, 1, 4);
      const int dim = uniform_int(rng, 1, 3);
      const Matrix c_seq = random_matrix(u_count, dim, 0.5, rng);
      const Codebook cb{random_matrix(k_count, dim, 0.5, rng)};
      const DurationSequence l = random_durations(u_count, k_count, rng);
      const SgCoeffs sg{coeff_dist(rng), coeff_dist(rng)};
      const PriorKlResult res = prior_kl(c_seq, cb, l, sg);
      const auto fc = [&](const Vector& flat) {
        return prior_branch_value(unflatten(flat, u_count, dim), c_seq,
                                  cb.codewords, cb.codewords, l, sg.alpha,
                                  sg.beta);
      };
      const auto fe = [&](const Vector& flat) {
        return prior_branch_value(c_seq, c_seq,
                                  unflatten(flat, k_count, dim), cb.codewords,
                                  l, sg.alpha, sg.beta);
      };
      worst = std::max(worst, finite_diff_check(fc, flatten(c_seq),
                                                flatten(res.grad_c), eps));
      worst = std::max(
          worst, finite_diff_check(fe, flatten(cb.codewords),
                                   flatten(res.grad_codebook), eps));
    }
    results.push_back(
        error_bound_result("gradients: prior_kl branches", worst, 1e-5));
  }

  // vq_kl, both branches, reference coefficients alpha=2, beta=1.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int u_count = uniform_int(rng, 1, 3);
      const int k_count = uniform_int(rng, 1, 4);
      const int dim = uniform_int(rng, 1, 3);
      const Matrix d_seq = random_matrix(u_count, dim, 1.0, rng);
      const Codebook cb{random_matrix(k_count, dim, 1.0, rng)};
      const DurationSequence l = random_durations(u_count, k_count, rng);
      const double sigma = 0.3 + coeff_dist(rng);
      const SgCoeffs sg{2.0, 1.0};
      const VqKlResult res = vq_kl(d_seq, cb, l, sigma, sg);
      const auto fd = [&](const Vector& flat) {
        return vq_branch_value(unflatten(flat, u_count, dim), d_seq,
                               cb.codewords, cb.codewords, l, sigma, sg.alpha,
                               sg.beta);
      };
      const auto fe = [&](const Vector& flat) {
        return vq_branch_value(d_seq, d_seq, unflatten(flat, k_count, dim),
                               cb.codewords, l, sigma, sg.alpha, sg.beta);
      };
      worst = std::max(worst, finite_diff_check(fd, flatten(d_seq),
                                                flatten(res.grad_d), eps));
      worst = std::max(
          worst, finite_diff_check(fe, flatten(cb.codewords),
                                   flatten(res.grad_codebook), eps));
    }
    results.push_back(
        error_bound_result("gradients: vq_kl branches", worst, 1e-5));
  }

  // Model ops: probe-weighted outputs vs full-parameter differences.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const ModelSpec spec = random_model_spec(rng);
      const ParamLayout layout(spec);
      Vector params = random_vector(layout.total, 0.4, rng);
      const Vector z_prev = random_vector(spec.D, 0.7, rng);
      const Vector xbar = random_vector(spec.O, 0.7, rng);
      const Vector x_prev = random_vector(spec.O, 0.7, rng);
      const int token = uniform_int(rng, 0, spec.V - 1);

      {
        const Vector probe = random_vector(spec.D, 0.5, rng);
        const StepResult fwd = latentnet_phi(layout, params, z_prev, token);
        Vector grad = Vector::Zero(layout.total);
        latentnet_phi_backward(layout, params, fwd, z_prev, token, probe,
                               grad);
        const auto f = [&](const Vector& p) {
          return probe.dot(latentnet_phi(layout, p, z_prev, token).out);
        };
        worst = std::max(worst, finite_diff_check(f, params, grad, eps));
      }
      {
        const Vector probe = random_vector(spec.D, 0.5, rng);
        const StepResult fwd =
            latentnet_psi(layout, params, z_prev, xbar, token);
        Vector grad = Vector::Zero(layout.total);
        latentnet_psi_backward(layout, params, fwd, z_prev, xbar, token, probe,
                               grad);
        const auto f = [&](const Vector& p) {
          return probe.dot(latentnet_psi(layout, p, z_prev, xbar, token).out);
        };
        worst = std::max(worst, finite_diff_check(f, params, grad, eps));
      }
      {
        const Vector probe = random_vector(spec.O, 0.5, rng);
        const Vector z_hat = random_vector(spec.D, 0.7, rng);
        const StepResult fwd =
            decoder_step(layout, params, x_prev, z_hat, token);
        Vector grad = Vector::Zero(layout.total);
        decoder_step_backward(layout, params, fwd, x_prev, z_hat, token, probe,
                              grad);
        const auto f = [&](const Vector& p) {
          return probe.dot(decoder_step(layout, p, x_prev, z_hat, token).out);
        };
        worst = std::max(worst, finite_diff_check(f, params, grad, eps));
      }
      {
        const int t_steps = uniform_int(rng, 1, 3);
        const Matrix frames =
            random_matrix(t_steps, spec.g * spec.O, 1.0, rng);
        const Matrix probe_t = random_matrix(t_steps, 2, 0.5, rng);
        const Matrix probe_e = random_matrix(t_steps, spec.V, 0.5, rng);
        const EncoderResult fwd = acoustic_encoder(layout, params, frames);
        Vector grad = Vector::Zero(layout.total);
        acoustic_encoder_backward(layout, params, fwd, frames, probe_t,
                                  probe_e, grad);
        const auto f = [&](const Vector& p) {
          const EncoderResult r = acoustic_encoder(layout, p, frames);
          return (probe_t.array() * r.em.log_trans.array()).sum() +
                 (probe_e.array() * r.em.log_emit.array()).sum();
        };
        worst = std::max(worst, finite_diff_check(f, params, grad, eps));
      }
    }
    results.push_back(
        error_bound_result("gradients: model ops", worst, 1e-5));
  }

  // CTC path end to end: encoder -> trellis -> log-marginal.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const ModelSpec spec = random_model_spec(rng);
      const ParamLayout layout(spec);
      const Vector params = random_vector(layout.total, 0.7, rng);
      const int u_count = uniform_int(rng, 1, 3);
      const int t_hi = std::min(u_count * spec.K, u_count + 3);
      const int t_steps = uniform_int(rng, u_count, t_hi);
      const TokenSequence y = random_tokens(u_count, spec.V, rng);
      const Matrix frames = random_matrix(t_steps, spec.g * spec.O, 1.0, rng);

      const EncoderResult fwd = acoustic_encoder(layout, params, frames);
      const MarginalGradient mg = marginal_gradient(fwd.em, y, spec.K);
      Vector grad = Vector::Zero(layout.total);
      acoustic_encoder_backward(layout, params, fwd, frames, mg.d_log_trans,
                                mg.d_log_emit, grad);
      const auto f = [&](const Vector& p) {
        const EncoderResult r = acoustic_encoder(layout, p, frames);
        return log_marginal(forward(r.em, y, spec.K));
      };
      worst = std::max(worst, finite_diff_check(f, params, grad, eps));
    }
    results.push_back(error_bound_result(
        "gradients: CTC marginal through encoder", worst, 1e-4));
  }

  return results;
}

std::vector<CheckResult> run_identity_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> results;

  {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int u_count = uniform_int(rng, 1, 5);
      const int k_count = uniform_int(rng, 1, 6);
      const int dim = uniform_int(rng, 1, 4);
      const Matrix c_seq = random_matrix(u_count, dim, 1.0, rng);
      const Codebook cb{random_matrix(k_count, dim, 1.0, rng)};
      const DurationSequence l = random_durations(u_count, k_count, rng);
      const double value = prior_kl(c_seq, cb, l, SgCoeffs{1.0, 0.0}).value;
      double neg_log = 0.0;
      for (int u = 0; u < u_count; ++u) {
        neg_log -= prior_logits(c_seq.row(u), cb)[l.durations[u] - 1];
      }
      worst = std::max(worst, std::abs(value - neg_log));
    }
    results.push_back(error_bound_result(
        "identity: prior_kl = -sum log prior_logits", worst, 1e-10));
  }

  {
    Matrix d_seq(1, 4);
    d_seq << 0.5, -0.5, 0.5, -0.5;  // unit-norm residual
    Codebook cb{Matrix::Zero(1, 4)};
    DurationSequence l{{1}};
    const double value = vq_kl(d_seq, cb, l, 0.4, SgCoeffs{2.0, 1.0}).value;
    std::ostringstream os;
    os << "multiplier " << value << " (expected 3.125)";
    results.push_back(make_result("identity: vq multiplier at sigma=0.4",
                                  std::abs(value - 3.125) <= 1e-12, os.str()));
  }

  {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int k_count = uniform_int(rng, 1, 8);
      const int dim = uniform_int(rng, 1, 5);
      const Vector c = random_vector(dim, 1.5, rng);
      const Codebook cb{random_matrix(k_count, dim, 1.5, rng)};
      const Vector logits = prior_logits(c, cb);
      std::vector<double> vals(logits.data(), logits.data() + logits.size());
      worst = std::max(worst, std::abs(log_sum_exp(vals)));
    }
    results.push_back(error_bound_result(
        "identity: prior_logits rows normalize", worst, 1e-12));
  }

  {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int u_count = uniform_int(rng, 1, 4);
      const int dim = uniform_int(rng, 1, 4);
      const Matrix rows = random_matrix(u_count, dim, 1.5, rng);
      const Codebook cb{random_matrix(1, dim, 1.5, rng)};
      DurationSequence l;
      l.durations.assign(u_count, 1);
      worst = std::max(
          worst, std::abs(prior_kl(rows, cb, l, SgCoeffs{1.0, 0.0}).value));
      worst = std::max(worst, std::abs(vq_kl_alt(rows, cb, l, 0.4)));
    }
    results.push_back(make_result("identity: K=1 degenerate terms are zero",
                                  worst == 0.0,
                                  worst == 0.0 ? "exactly zero"
                                               : "nonzero remainder"));
  }

  return results;
}

std::vector<CheckResult> run_constraint_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> results;

  {
    int outputs = 0;
    int violations = 0;
    while (outputs < 1000) {
      const RandomInstance inst = random_instance(rng, 18, 6, 5, 6);
      const int width = uniform_int(rng, 1, 5);
      for (const ScoredDuration& sd :
           nbest_beam(inst.em, inst.y, inst.k_max, width)) {
        ++outputs;
        if (!validate_duration(sd.durations, inst.y.size(),
                               inst.em.num_steps(), inst.k_max)) {
          ++violations;
        }
      }
    }
    std::ostringstream os;
    os << outputs << " outputs, " << violations << " violations";
    results.push_back(
        make_result("constraints: beam outputs valid", violations == 0,
                    os.str()));
  }

  {
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      Alignment a;
      const int t_steps = uniform_int(rng, 1, 24);
      a.transitions.resize(t_steps);
      a.transitions[0] = Transition::Shift;
      for (int t = 1; t < t_steps; ++t) {
        a.transitions[t] = uniform_int(rng, 0, 1) == 1 ? Transition::Shift
                                                       : Transition::Blank;
      }
      const Alignment back =
          duration_to_alignment(alignment_to_duration(a));
      if (back.transitions != a.transitions) ++failures;
    }
    std::ostringstream os;
    os << failures << " of 1000 round trips failed";
    results.push_back(make_result(
        "constraints: alignment round trip", failures == 0, os.str()));
  }

  return results;
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  std::vector<CheckResult> all;
  for (auto batch :
       {run_oracle_equivalence(seed), run_gradient_suite(seed + 1),
        run_identity_suite(seed + 2), run_constraint_suite(seed + 3)}) {
    all.insert(all.end(), batch.begin(), batch.end());
  }
  return all;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace latentdur
