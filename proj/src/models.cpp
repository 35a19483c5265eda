#include "latentdur/models.hpp"

#include "latentdur/numeric.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace latentdur {

using nlohmann::json;

void ModelSpec::validate() const {
  const int dims[] = {V, E, H, O, D, g, K};
  for (const int d : dims) {
    if (d < 1) throw std::invalid_argument("ModelSpec: all dims must be >= 1");
  }
}

ParamLayout::ParamLayout(const ModelSpec& s) : spec(s) {
  spec.validate();
  int at = 0;
  const auto place = [&at](Block& b, int rows, int cols) {
    b = Block{at, rows, cols};
    at += rows * cols;
  };

  const int theta_begin = at;
  place(dec_w, s.H, s.O + s.D + s.E);
  place(dec_b, s.H, 1);
  place(dec_head_w, s.O, s.H);
  place(dec_head_b, s.O, 1);
  theta = {theta_begin, at - theta_begin};

  const int psi_begin = at;
  place(psi_w, s.H, s.D + s.O + s.E);
  place(psi_b, s.H, 1);
  place(psi_head_w, s.D, s.H);
  place(psi_head_b, s.D, 1);
  psi = {psi_begin, at - psi_begin};

  const int phi_begin = at;
  place(emb, s.V, s.E);
  place(phi_w, s.H, s.D + s.E);
  place(phi_b, s.H, 1);
  place(phi_head_w, s.D, s.H);
  place(phi_head_b, s.D, 1);
  phi = {phi_begin, at - phi_begin};

  const int lambda_begin = at;
  place(enc_w, s.H, s.g * s.O);
  place(enc_b, s.H, 1);
  place(enc_trans_w, 2, s.H);
  place(enc_trans_b, 2, 1);
  place(enc_emit_w, s.V, s.H);
  place(enc_emit_b, s.V, 1);
  lambda = {lambda_begin, at - lambda_begin};

  place(codebook_block, s.K, s.D);
  codebook_span = {codebook_block.offset, codebook_block.size()};
  place(start_code_block, s.D, 1);
  start_code_span = {start_code_block.offset, start_code_block.size()};

  total = at;
}

Codebook codebook_from_params(const ParamLayout& layout, const Vector& params) {
  return Codebook{block_view(params, layout.codebook_block)};
}

Vector start_code_from_params(const ParamLayout& layout, const Vector& params) {
  return params.segment(layout.start_code_block.offset, layout.spec.D);
}

Vector init_params(const ParamLayout& layout, std::mt19937_64& rng,
                   double emb_scale, double codebook_scale,
                   double start_scale) {
  Vector params = Vector::Zero(layout.total);
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto fill = [&](const Block& b, double scale) {
    auto view = block_view(params, b);
    for (int c = 0; c < b.cols; ++c)
      for (int r = 0; r < b.rows; ++r) view(r, c) = scale * unit(rng);
  };
  const auto fan_in = [](const Block& b) {
    return 1.0 / std::sqrt(static_cast<double>(b.cols));
  };

  // Bodies get scaled Gaussian weights; output heads start at zero so
  // outputs begin at the neutral point (zero predictions, uniform
  // emissions) and the whole optimizer budget builds signal.
  fill(layout.dec_w, fan_in(layout.dec_w));
  fill(layout.psi_w, fan_in(layout.psi_w));
  fill(layout.emb, emb_scale);
  fill(layout.phi_w, fan_in(layout.phi_w));
  fill(layout.enc_w, fan_in(layout.enc_w));
  fill(layout.codebook_block, codebook_scale);
  fill(layout.start_code_block, start_scale);
  return params;
}

namespace {

void check_token(const ParamLayout& layout, int token, const char* who) {
  if (token < 0 || token >= layout.spec.V)
    throw std::invalid_argument(std::string(who) + ": bad token id");
}

// out = head_w * tanh(w * in + b) + head_b
StepResult affine_tanh_affine(const Vector& params, const Block& w,
                              const Block& b, const Block& head_w,
                              const Block& head_b, const Vector& in) {
  StepResult r;
  r.h = (block_view(params, w) * in + block_view(params, b).col(0))
            .array()
            .tanh()
            .matrix();
  r.out = block_view(params, head_w) * r.h + block_view(params, head_b).col(0);
  return r;
}

// Returns the gradient w.r.t. `in`.
Vector affine_tanh_affine_backward(const Vector& params, const Block& w,
                                   const Block& b, const Block& head_w,
                                   const Block& head_b, const Vector& in,
                                   const StepResult& fwd,
                                   const Vector& grad_out,
                                   Vector& grad_params) {
  block_view(grad_params, head_w).noalias() += grad_out * fwd.h.transpose();
  block_view(grad_params, head_b).col(0) += grad_out;
  const Vector gh = block_view(params, head_w).transpose() * grad_out;
  const Vector gpre =
      (gh.array() * (1.0 - fwd.h.array().square())).matrix();
  block_view(grad_params, w).noalias() += gpre * in.transpose();
  block_view(grad_params, b).col(0) += gpre;
  return block_view(params, w).transpose() * gpre;
}

}  // namespace

StepResult latentnet_phi(const ParamLayout& layout, const Vector& params,
                         const Vector& z_prev, int token) {
  check_token(layout, token, "latentnet_phi");
  const auto& s = layout.spec;
  Vector in(s.D + s.E);
  in << z_prev, block_view(params, layout.emb).row(token).transpose();
  return affine_tanh_affine(params, layout.phi_w, layout.phi_b,
                            layout.phi_head_w, layout.phi_head_b, in);
}

Vector latentnet_phi_backward(const ParamLayout& layout, const Vector& params,
                              const StepResult& fwd, const Vector& z_prev,
                              int token, const Vector& grad_out,
                              Vector& grad_params) {
  const auto& s = layout.spec;
  Vector in(s.D + s.E);
  in << z_prev, block_view(params, layout.emb).row(token).transpose();
  const Vector gin = affine_tanh_affine_backward(
      params, layout.phi_w, layout.phi_b, layout.phi_head_w,
      layout.phi_head_b, in, fwd, grad_out, grad_params);
  block_view(grad_params, layout.emb).row(token) +=
      gin.tail(s.E).transpose();
  return gin.head(s.D);
}

StepResult latentnet_psi(const ParamLayout& layout, const Vector& params,
                         const Vector& z_prev, const Vector& xbar, int token) {
  check_token(layout, token, "latentnet_psi");
  const auto& s = layout.spec;
  Vector in(s.D + s.O + s.E);
  in << z_prev, xbar, block_view(params, layout.emb).row(token).transpose();
  return affine_tanh_affine(params, layout.psi_w, layout.psi_b,
                            layout.psi_head_w, layout.psi_head_b, in);
}

Vector latentnet_psi_backward(const ParamLayout& layout, const Vector& params,
                              const StepResult& fwd, const Vector& z_prev,
                              const Vector& xbar, int token,
                              const Vector& grad_out, Vector& grad_params) {
  const auto& s = layout.spec;
  Vector in(s.D + s.O + s.E);
  in << z_prev, xbar, block_view(params, layout.emb).row(token).transpose();
  const Vector gin = affine_tanh_affine_backward(
      params, layout.psi_w, layout.psi_b, layout.psi_head_w,
      layout.psi_head_b, in, fwd, grad_out, grad_params);
  block_view(grad_params, layout.emb).row(token) +=
      gin.tail(s.E).transpose();
  return gin.head(s.D);
}

StepResult decoder_step(const ParamLayout& layout, const Vector& params,
                        const Vector& x_prev, const Vector& z_hat, int token) {
  check_token(layout, token, "decoder_step");
  const auto& s = layout.spec;
  Vector in(s.O + s.D + s.E);
  in << x_prev, z_hat, block_view(params, layout.emb).row(token).transpose();
  return affine_tanh_affine(params, layout.dec_w, layout.dec_b,
                            layout.dec_head_w, layout.dec_head_b, in);
}

void decoder_step_backward(const ParamLayout& layout, const Vector& params,
                           const StepResult& fwd, const Vector& x_prev,
                           const Vector& z_hat, int token,
                           const Vector& grad_mu, Vector& grad_params) {
  const auto& s = layout.spec;
  Vector in(s.O + s.D + s.E);
  in << x_prev, z_hat, block_view(params, layout.emb).row(token).transpose();
  const Vector gin = affine_tanh_affine_backward(
      params, layout.dec_w, layout.dec_b, layout.dec_head_w,
      layout.dec_head_b, in, fwd, grad_mu, grad_params);
  block_view(grad_params, layout.emb).row(token) +=
      gin.tail(s.E).transpose();
}

EncoderResult acoustic_encoder(const ParamLayout& layout, const Vector& params,
                               const Matrix& super_frames) {
  const auto& s = layout.spec;
  if (super_frames.cols() != static_cast<long long>(s.g) * s.O)
    throw std::invalid_argument("acoustic_encoder: super-frame width mismatch");
  EncoderResult r;
  r.h = (block_view(params, layout.enc_w) * super_frames.transpose())
            .colwise() +
        block_view(params, layout.enc_b).col(0);
  r.h = r.h.array().tanh().matrix();  // H x T'

  const auto log_softmax_rows = [](Matrix logits) {
    for (int t = 0; t < logits.rows(); ++t) {
      const double m = logits.row(t).maxCoeff();
      const double lse =
          m + std::log((logits.row(t).array() - m).exp().sum());
      logits.row(t).array() -= lse;
    }
    return logits;
  };

  Matrix trans_logits =
      (block_view(params, layout.enc_trans_w) * r.h).transpose();
  trans_logits.rowwise() +=
      block_view(params, layout.enc_trans_b).col(0).transpose();
  Matrix emit_logits =
      (block_view(params, layout.enc_emit_w) * r.h).transpose();
  emit_logits.rowwise() +=
      block_view(params, layout.enc_emit_b).col(0).transpose();

  r.em.log_trans = log_softmax_rows(std::move(trans_logits));
  r.em.log_emit = log_softmax_rows(std::move(emit_logits));
  return r;
}

void acoustic_encoder_backward(const ParamLayout& layout, const Vector& params,
                               const EncoderResult& fwd,
                               const Matrix& super_frames,
                               const Matrix& d_log_trans,
                               const Matrix& d_log_emit, Vector& grad_params) {
  // d/d logit_j = g_j - softmax_j * sum_i g_i
  const auto logit_grad = [](const Matrix& log_probs, const Matrix& g) {
    Matrix out = g;
    for (int t = 0; t < g.rows(); ++t) {
      const double gsum = g.row(t).sum();
      out.row(t).array() -= log_probs.row(t).array().exp() * gsum;
    }
    return out;
  };
  const Matrix g_trans = logit_grad(fwd.em.log_trans, d_log_trans);  // T' x 2
  const Matrix g_emit = logit_grad(fwd.em.log_emit, d_log_emit);     // T' x V

  block_view(grad_params, layout.enc_trans_w).noalias() +=
      g_trans.transpose() * fwd.h.transpose();
  block_view(grad_params, layout.enc_trans_b).col(0) +=
      g_trans.colwise().sum().transpose();
  block_view(grad_params, layout.enc_emit_w).noalias() +=
      g_emit.transpose() * fwd.h.transpose();
  block_view(grad_params, layout.enc_emit_b).col(0) +=
      g_emit.colwise().sum().transpose();

  // Body: gh (H x T') via both heads, then through tanh.
  Matrix gh = block_view(params, layout.enc_trans_w).transpose() *
                  g_trans.transpose() +
              block_view(params, layout.enc_emit_w).transpose() *
                  g_emit.transpose();
  gh = (gh.array() * (1.0 - fwd.h.array().square())).matrix();
  block_view(grad_params, layout.enc_w).noalias() += gh * super_frames;
  block_view(grad_params, layout.enc_b).col(0) += gh.rowwise().sum();
}

double finite_diff_check(const std::function<double(const Vector&)>& f,
                         const Vector& point, const Vector& analytic_grad,
                         double eps) {
  if (point.size() != analytic_grad.size())
    throw std::invalid_argument("finite_diff_check: size mismatch");
  double worst = 0.0;
  Vector probe = point;
  for (int i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double up = f(probe);
    probe[i] = point[i] - eps;
    const double down = f(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic_grad[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic_grad[i] - numeric) / denom);
  }
  return worst;
}

std::string params_to_json(const ModelParams& params) {
  const ParamLayout layout(params.spec);
  if (params.values.size() != layout.total)
    throw std::invalid_argument("params_to_json: value count != layout size");
  json j;
  j["spec"] = {{"V", params.spec.V}, {"E", params.spec.E},
               {"H", params.spec.H}, {"O", params.spec.O},
               {"D", params.spec.D}, {"g", params.spec.g},
               {"K", params.spec.K}};
  j["slices"] = {
      {"theta", {layout.theta.offset, layout.theta.size}},
      {"psi", {layout.psi.offset, layout.psi.size}},
      {"phi", {layout.phi.offset, layout.phi.size}},
      {"lambda", {layout.lambda.offset, layout.lambda.size}},
      {"codebook", {layout.codebook_span.offset, layout.codebook_span.size}},
      {"start_code",
       {layout.start_code_span.offset, layout.start_code_span.size}}};
  json values = json::array();
  for (int i = 0; i < params.values.size(); ++i)
    values.push_back(params.values[i]);
  j["values"] = std::move(values);
  return j.dump();
}

ModelParams params_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelParams p;
  const json& s = j.at("spec");
  p.spec.V = s.at("V").get<int>();
  p.spec.E = s.at("E").get<int>();
  p.spec.H = s.at("H").get<int>();
  p.spec.O = s.at("O").get<int>();
  p.spec.D = s.at("D").get<int>();
  p.spec.g = s.at("g").get<int>();
  p.spec.K = s.at("K").get<int>();
  const ParamLayout layout(p.spec);
  const json& values = j.at("values");
  if (static_cast<int>(values.size()) != layout.total)
    throw std::invalid_argument("params_from_json: value count != layout size");
  p.values.resize(layout.total);
  for (int i = 0; i < layout.total; ++i)
    p.values[i] = values.at(i).get<double>();
  return p;
}

}  // namespace latentdur
