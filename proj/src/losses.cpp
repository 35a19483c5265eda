#include "latentdur/losses.hpp"

#include "latentdur/numeric.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace latentdur {

namespace {

void check_durations(const DurationSequence& l, int u_count, int k_max,
                     const char* who) {
  if (l.size() != u_count)
    throw std::invalid_argument(std::string(who) +
                                ": duration count != sequence length");
  for (const int dur : l.durations) {
    if (dur < 1 || dur > k_max)
      throw std::invalid_argument(std::string(who) +
                                  ": code word index out of range");
  }
}

// Row u holds ||row_u - e_k||^2 for every code word k.
Matrix pairwise_sqdist(const Matrix& rows, const Matrix& codewords) {
  const int u_count = static_cast<int>(rows.rows());
  const int k_count = static_cast<int>(codewords.rows());
  Matrix d2(u_count, k_count);
  for (int u = 0; u < u_count; ++u) {
    for (int k = 0; k < k_count; ++k) {
      d2(u, k) = (rows.row(u) - codewords.row(k)).squaredNorm();
    }
  }
  return d2;
}

}  // namespace

SqDistResult sg_sqdist(const Vector& a, const Vector& b, const SgCoeffs& c) {
  if (a.size() != b.size())
    throw std::invalid_argument("sg_sqdist: dimension mismatch");
  SqDistResult r;
  const Vector diff = a - b;
  r.value = diff.squaredNorm();
  r.grad_a = 2.0 * c.alpha * diff;
  r.grad_b = -2.0 * c.beta * diff;
  return r;
}

DecoderNllResult decoder_nll(const FrameSequence& x, const Matrix& mu,
                             double sigma_d) {
  if (sigma_d <= 0.0)
    throw std::invalid_argument("decoder_nll: sigma_d must be positive");
  if (x.frames.rows() != mu.rows() || x.frames.cols() != mu.cols())
    throw std::invalid_argument("decoder_nll: shape mismatch");
  const double inv_var = 1.0 / (sigma_d * sigma_d);
  const double t_frames = static_cast<double>(x.frames.rows());
  const double o_dim = static_cast<double>(x.frames.cols());

  DecoderNllResult r;
  const Matrix resid = mu - x.frames;
  r.value = 0.5 * inv_var * resid.squaredNorm() +
            t_frames * 0.5 * o_dim *
                std::log(2.0 * std::numbers::pi * sigma_d * sigma_d);
  r.grad_mu = inv_var * resid;
  return r;
}

Vector prior_logits(const Vector& c, const Codebook& cb) {
  if (c.size() != cb.dim())
    throw std::invalid_argument("prior_logits: dimension mismatch");
  const int k_count = cb.size();
  std::vector<double> neg_d2(k_count);
  for (int k = 0; k < k_count; ++k) {
    neg_d2[k] = -(c.transpose() - cb.codewords.row(k)).squaredNorm();
  }
  const double lse = log_sum_exp(neg_d2);
  Vector out(k_count);
  for (int k = 0; k < k_count; ++k) out[k] = neg_d2[k] - lse;
  return out;
}

PriorKlResult prior_kl(const Matrix& c_seq, const Codebook& cb,
                       const DurationSequence& l, const SgCoeffs& sg) {
  if (c_seq.cols() != cb.dim())
    throw std::invalid_argument("prior_kl: dimension mismatch");
  const int u_count = static_cast<int>(c_seq.rows());
  const int k_count = cb.size();
  check_durations(l, u_count, k_count, "prior_kl");

  const Matrix d2 = pairwise_sqdist(c_seq, cb.codewords);
  PriorKlResult r;
  r.grad_c = Matrix::Zero(u_count, cb.dim());
  r.grad_codebook = Matrix::Zero(k_count, cb.dim());

  std::vector<double> neg_row(k_count);
  for (int u = 0; u < u_count; ++u) {
    const int sel = l.durations[u] - 1;
    for (int k = 0; k < k_count; ++k) neg_row[k] = -d2(u, k);
    const double lse = log_sum_exp(neg_row);
    r.value += d2(u, sel) + lse;

    // Quadratic term, sg-decomposed.
    r.grad_c.row(u) +=
        2.0 * sg.alpha * (c_seq.row(u) - cb.codewords.row(sel));
    r.grad_codebook.row(sel) +=
        2.0 * sg.beta * (cb.codewords.row(sel) - c_seq.row(u));

    // Log-sum-exp term: softmax weights over -d2, each inner distance
    // sg-decomposed the same way.
    for (int k = 0; k < k_count; ++k) {
      const double w = std::exp(neg_row[k] - lse);
      r.grad_c.row(u) -= 2.0 * sg.alpha * w * (c_seq.row(u) - cb.codewords.row(k));
      r.grad_codebook.row(k) -=
          2.0 * sg.beta * w * (cb.codewords.row(k) - c_seq.row(u));
    }
  }
  return r;
}

VqKlResult vq_kl(const Matrix& d_seq, const Codebook& cb,
                 const DurationSequence& l, double sigma,
                 const SgCoeffs& sg) {
  if (sigma <= 0.0)
    throw std::invalid_argument("vq_kl: sigma must be positive");
  if (d_seq.cols() != cb.dim())
    throw std::invalid_argument("vq_kl: dimension mismatch");
  const int u_count = static_cast<int>(d_seq.rows());
  check_durations(l, u_count, cb.size(), "vq_kl");

  const double scale = 1.0 / (2.0 * sigma * sigma);
  VqKlResult r;
  r.grad_d = Matrix::Zero(u_count, cb.dim());
  r.grad_codebook = Matrix::Zero(cb.size(), cb.dim());
  for (int u = 0; u < u_count; ++u) {
    const int sel = l.durations[u] - 1;
    const auto resid = d_seq.row(u) - cb.codewords.row(sel);
    r.value += scale * resid.squaredNorm();
    r.grad_d.row(u) = 2.0 * scale * sg.alpha * resid;
    r.grad_codebook.row(sel) -= 2.0 * scale * sg.beta * resid;
  }
  return r;
}

double vq_kl_alt(const Matrix& d_seq, const Codebook& cb,
                 const DurationSequence& l, double sigma) {
  if (sigma <= 0.0)
    throw std::invalid_argument("vq_kl_alt: sigma must be positive");
  if (d_seq.cols() != cb.dim())
    throw std::invalid_argument("vq_kl_alt: dimension mismatch");
  const int u_count = static_cast<int>(d_seq.rows());
  const int k_count = cb.size();
  check_durations(l, u_count, k_count, "vq_kl_alt");

  const double scale = 1.0 / (2.0 * sigma * sigma);
  const Matrix d2 = pairwise_sqdist(d_seq, cb.codewords);
  double value = 0.0;
  std::vector<double> neg_row(k_count);
  for (int u = 0; u < u_count; ++u) {
    const int sel = l.durations[u] - 1;
    for (int k = 0; k < k_count; ++k) neg_row[k] = -scale * d2(u, k);
    value += scale * d2(u, sel) + log_sum_exp(neg_row);
  }
  return value;
}

LossBreakdown total_objective(double decoder_nll_value, double prior_kl_value,
                              double vq_kl_value, double ctc_nll_value,
                              double gamma) {
  const double parts[] = {decoder_nll_value, prior_kl_value, vq_kl_value,
                          ctc_nll_value, gamma};
  for (const double p : parts) {
    if (!std::isfinite(p)) {
      std::ostringstream os;
      os << "total_objective: non-finite input (" << decoder_nll_value << ", "
         << prior_kl_value << ", " << vq_kl_value << ", " << ctc_nll_value
         << ", gamma=" << gamma << ")";
      throw std::invalid_argument(os.str());
    }
  }
  LossBreakdown out;
  out.decoder_nll = decoder_nll_value;
  out.prior_kl = prior_kl_value;
  out.vq_kl = vq_kl_value;
  out.ctc_nll = ctc_nll_value;
  out.total = decoder_nll_value + prior_kl_value + vq_kl_value +
              gamma * ctc_nll_value;
  return out;
}

}  // namespace latentdur
