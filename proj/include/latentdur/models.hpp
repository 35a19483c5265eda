#pragma once

#include "latentdur/trellis.hpp"
#include "latentdur/types.hpp"

#include <functional>
#include <random>

namespace latentdur {

/// Shape of the toy model family: shared token embedding (E), one
/// affine-tanh hidden layer per net (H), frame dim O, code dim D,
/// grouping g, codebook size K, vocabulary V.
struct ModelSpec {
  int V = 1;
  int E = 16;
  int H = 32;
  int O = 1;
  int D = 8;
  int g = 1;
  int K = 1;

  void validate() const;
};

struct Block {
  int offset = 0;
  int rows = 0;
  int cols = 0;

  int size() const { return rows * cols; }
};

struct Span {
  int offset = 0;
  int size = 0;
};

/// Deterministic named-slice layout of the flat parameter vector:
/// [theta | psi | phi | lambda | codebook | start_code].
struct ParamLayout {
  ModelSpec spec;

  // theta: auto-regressive decoder
  Block dec_w, dec_b, dec_head_w, dec_head_b;
  // psi: posterior latent net
  Block psi_w, psi_b, psi_head_w, psi_head_b;
  // phi: prior latent net + shared linguistic embedding
  Block emb, phi_w, phi_b, phi_head_w, phi_head_b;
  // lambda: acoustic encoder of the aligner
  Block enc_w, enc_b, enc_trans_w, enc_trans_b, enc_emit_w, enc_emit_b;
  Block codebook_block;
  Block start_code_block;

  Span theta, psi, phi, lambda, codebook_span, start_code_span;
  int total = 0;

  explicit ParamLayout(const ModelSpec& s);
};

/// Flat real parameter vector plus the spec that fixes its layout.
struct ModelParams {
  ModelSpec spec;
  Vector values;

  ParamLayout layout() const { return ParamLayout(spec); }
};

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

inline ConstMap block_view(const Vector& params, const Block& b) {
  return ConstMap(params.data() + b.offset, b.rows, b.cols);
}
inline MutMap block_view(Vector& params, const Block& b) {
  return MutMap(params.data() + b.offset, b.rows, b.cols);
}

Codebook codebook_from_params(const ParamLayout& layout, const Vector& params);
Vector start_code_from_params(const ParamLayout& layout, const Vector& params);

/// Gaussian init scaled by 1/sqrt(fan_in) for weights; biases zero;
/// embedding, codebook and start code at the given spreads.
Vector init_params(const ParamLayout& layout, std::mt19937_64& rng,
                   double emb_scale = 1.0, double codebook_scale = 0.5,
                   double start_scale = 0.1);

/// c_u = head(tanh(W [z_prev; emb(y_u)] + b)); h cached for backprop.
struct StepResult {
  Vector out;
  Vector h;
};

StepResult latentnet_phi(const ParamLayout& layout, const Vector& params,
                         const Vector& z_prev, int token);

/// Accumulates parameter gradients for one phi step; returns the
/// gradient w.r.t. the z_prev input (routed to the start code by the
/// caller when u = 1, dropped when z_prev is a code word).
Vector latentnet_phi_backward(const ParamLayout& layout, const Vector& params,
                              const StepResult& fwd, const Vector& z_prev,
                              int token, const Vector& grad_out,
                              Vector& grad_params);

/// d_u = head(tanh(W [z_prev; xbar_u; emb(y_u)] + b)).
StepResult latentnet_psi(const ParamLayout& layout, const Vector& params,
                         const Vector& z_prev, const Vector& xbar, int token);

Vector latentnet_psi_backward(const ParamLayout& layout, const Vector& params,
                              const StepResult& fwd, const Vector& z_prev,
                              const Vector& xbar, int token,
                              const Vector& grad_out, Vector& grad_params);

/// mu_t = head(tanh(W [x_prev; z_hat; emb(y_hat)] + b)); x_prev at t=1
/// is the zero go-frame.
StepResult decoder_step(const ParamLayout& layout, const Vector& params,
                        const Vector& x_prev, const Vector& z_hat, int token);

void decoder_step_backward(const ParamLayout& layout, const Vector& params,
                           const StepResult& fwd, const Vector& x_prev,
                           const Vector& z_hat, int token,
                           const Vector& grad_mu, Vector& grad_params);

/// Per-super-frame transition (2) and token (V) logits, log-softmax
/// normalized into an EmissionTable. Hidden activations cached.
struct EncoderResult {
  EmissionTable em;
  Matrix h;  // H x T'
};

EncoderResult acoustic_encoder(const ParamLayout& layout, const Vector& params,
                               const Matrix& super_frames);

/// Chains gradients w.r.t. the log-probabilities through the two
/// log-softmax heads and the shared body.
void acoustic_encoder_backward(const ParamLayout& layout, const Vector& params,
                               const EncoderResult& fwd,
                               const Matrix& super_frames,
                               const Matrix& d_log_trans,
                               const Matrix& d_log_emit, Vector& grad_params);

/// Max elementwise relative error between analytic_grad and central
/// finite differences of f at point, denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double(const Vector&)>& f,
                         const Vector& point, const Vector& analytic_grad,
                         double eps);

std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

}  // namespace latentdur
