#pragma once

#include "latentdur/types.hpp"

namespace latentdur {

/// Weights of the stop-gradient decomposition
/// f(a, b) = alpha * ||a - sg[b]||^2 + beta * ||sg[a] - b||^2.
/// The decomposition changes gradients only; reported values stay the
/// plain squared distance so loss curves are comparable across settings.
struct SgCoeffs {
  double alpha = 1.0;
  double beta = 0.0;
};

struct SqDistResult {
  double value = 0.0;  // ||a - b||^2
  Vector grad_a;       // 2 * alpha * (a - b)
  Vector grad_b;       // 2 * beta  * (b - a)
};

SqDistResult sg_sqdist(const Vector& a, const Vector& b, const SgCoeffs& c);

/// Negative log-likelihood of frames under per-frame isotropic
/// Gaussians N(x_t; mu_t, sigma_d^2 I), normalization constant included.
struct DecoderNllResult {
  double value = 0.0;
  Matrix grad_mu;  // (mu - x) / sigma_d^2
};

DecoderNllResult decoder_nll(const FrameSequence& x, const Matrix& mu,
                             double sigma_d);

/// log P(k) = -||c - e_k||^2 - log sum_j exp(-||c - e_j||^2); the
/// returned length-K vector log-sums to 0.
Vector prior_logits(const Vector& c, const Codebook& cb);

/// sum_u [ ||c_u - e_{l_u}||^2 + log sum_k exp(-||c_u - e_k||^2) ],
/// the negative log prior mass on the selected code words. The sg
/// decomposition applies to every squared distance, including those
/// inside the log-sum-exp.
struct PriorKlResult {
  double value = 0.0;
  Matrix grad_c;         // U x D
  Matrix grad_codebook;  // K x D
};

PriorKlResult prior_kl(const Matrix& c_seq, const Codebook& cb,
                       const DurationSequence& l, const SgCoeffs& sg);

/// sum_u ||d_u - e_{l_u}||^2 / (2 sigma^2), the Gaussian-vs-Gaussian
/// quantization KL.
struct VqKlResult {
  double value = 0.0;
  Matrix grad_d;         // U x D
  Matrix grad_codebook;  // K x D
};

VqKlResult vq_kl(const Matrix& d_seq, const Codebook& cb,
                 const DurationSequence& l, double sigma, const SgCoeffs& sg);

/// Mixture-denominator variant: adds log sum_k exp(-||d_u - e_k||^2 /
/// (2 sigma^2)) per token; the constant normalizer is dropped.
double vq_kl_alt(const Matrix& d_seq, const Codebook& cb,
                 const DurationSequence& l, double sigma);

/// total = decoder_nll + prior_kl + vq_kl + gamma * ctc_nll.
LossBreakdown total_objective(double decoder_nll_value, double prior_kl_value,
                              double vq_kl_value, double ctc_nll_value,
                              double gamma);

}  // namespace latentdur
