#include "latentdur/training.hpp"

#include "latentdur/numeric.hpp"
#include "latentdur/seq_ops.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace latentdur {

using nlohmann::json;

AdamState adam_init(int n) {
  AdamState s;
  s.m = Vector::Zero(n);
  s.v = Vector::Zero(n);
  return s;
}

std::pair<Vector, AdamState> adam_update(const Vector& params,
                                         const Vector& grads,
                                         const AdamState& state, double lr,
                                         double beta1, double beta2,
                                         double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw std::invalid_argument("adam_update: shape mismatch");

  AdamState next;
  next.step = state.step + 1;
  next.m = beta1 * state.m + (1.0 - beta1) * grads;
  next.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(next.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(next.step));
  const Vector mhat = next.m / bc1;
  const Vector vhat = next.v / bc2;
  Vector updated =
      params - lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  return {std::move(updated), std::move(next)};
}

namespace {

void check_config_matches(const ModelSpec& spec, const TrainConfig& cfg) {
  if (spec.K != cfg.K || spec.g != cfg.g || spec.D != cfg.D ||
      spec.O != cfg.O)
    throw std::invalid_argument(
        "train_step: config (K, g, D, O) disagrees with model spec");
}

struct ElboTerms {
  double decoder_nll = 0.0;
  double prior_kl = 0.0;
  double vq_kl = 0.0;
};

// Teacher-forced pass for one duration hypothesis; accumulates
// weight-scaled gradients for theta/psi/phi, the codebook (distance
// terms only) and the start code.
ElboTerms elbo_pass(const ParamLayout& layout, const Vector& params,
                    const TokenSequence& y, const FrameSequence& x,
                    const DurationSequence& l, const TrainConfig& cfg,
                    double weight, Vector& grad) {
  const auto& s = layout.spec;
  const int u_count = y.size();
  const Codebook cb = codebook_from_params(layout, params);
  const Vector start = start_code_from_params(layout, params);

  const Matrix xbar = aggregate(x, l, s.g);

  // Latent nets, posterior code words fed back.
  Matrix c_seq(u_count, s.D);
  Matrix d_seq(u_count, s.D);
  std::vector<StepResult> phi_steps(u_count), psi_steps(u_count);
  for (int u = 0; u < u_count; ++u) {
    const Vector z_prev =
        u == 0 ? start : Vector(cb.codewords.row(l.durations[u - 1] - 1));
    phi_steps[u] = latentnet_phi(layout, params, z_prev, y.tokens[u]);
    psi_steps[u] =
        latentnet_psi(layout, params, z_prev, xbar.row(u), y.tokens[u]);
    c_seq.row(u) = phi_steps[u].out;
    d_seq.row(u) = psi_steps[u].out;
  }

  // Frame-rate decoder, teacher forced from the true previous frame.
  Matrix selected(u_count, s.D);
  for (int u = 0; u < u_count; ++u)
    selected.row(u) = cb.codewords.row(l.durations[u] - 1);
  const Matrix z_hat = upsample(selected, l, s.g);
  const int t_frames = static_cast<int>(z_hat.rows());
  std::vector<int> y_hat(t_frames);
  {
    int t = 0;
    for (int u = 0; u < u_count; ++u)
      for (int i = 0; i < l.durations[u] * s.g; ++i) y_hat[t++] = y.tokens[u];
  }
  Matrix mu(t_frames, s.O);
  std::vector<StepResult> dec_steps(t_frames);
  Vector x_prev = Vector::Zero(s.O);
  for (int t = 0; t < t_frames; ++t) {
    if (t > 0) x_prev = x.frames.row(t - 1);
    dec_steps[t] =
        decoder_step(layout, params, x_prev, z_hat.row(t), y_hat[t]);
    mu.row(t) = dec_steps[t].out;
  }

  const DecoderNllResult dec =
      decoder_nll(x, mu, cfg.sigma_d);
  const PriorKlResult prior =
      prior_kl(c_seq, cb, l, SgCoeffs{cfg.alpha_prior, cfg.beta_prior});
  const VqKlResult vq =
      vq_kl(d_seq, cb, l, cfg.sigma, SgCoeffs{cfg.alpha_vq, cfg.beta_vq});

  // Backward. Code word inputs are constants; only the start code
  // receives the z_prev input gradient.
  x_prev = Vector::Zero(s.O);
  for (int t = 0; t < t_frames; ++t) {
    if (t > 0) x_prev = x.frames.row(t - 1);
    decoder_step_backward(layout, params, dec_steps[t], x_prev, z_hat.row(t),
                          y_hat[t], weight * dec.grad_mu.row(t).transpose(),
                          grad);
  }
  for (int u = 0; u < u_count; ++u) {
    const Vector z_prev =
        u == 0 ? start : Vector(cb.codewords.row(l.durations[u - 1] - 1));
    const Vector g_phi = latentnet_phi_backward(
        layout, params, phi_steps[u], z_prev, y.tokens[u],
        weight * prior.grad_c.row(u).transpose(), grad);
    const Vector g_psi = latentnet_psi_backward(
        layout, params, psi_steps[u], z_prev, xbar.row(u), y.tokens[u],
        weight * vq.grad_d.row(u).transpose(), grad);
    if (u == 0) {
      grad.segment(layout.start_code_block.offset, s.D) +=
          weight * (g_phi + g_psi);
    }
  }
  block_view(grad, layout.codebook_block) +=
      weight * (prior.grad_codebook + vq.grad_codebook);

  return {weight * dec.value, weight * prior.value, weight * vq.value};
}

}  // namespace

StepReport train_step(std::span<const BatchItem> batch, ModelParams& params,
                      AdamState& state, const TrainConfig& cfg,
                      std::span<const DurationSequence> forced_durations) {
  cfg.validate();
  const ParamLayout layout(params.spec);
  check_config_matches(params.spec, cfg);
  if (params.values.size() != layout.total)
    throw std::invalid_argument("train_step: parameter vector size mismatch");
  if (!forced_durations.empty() && forced_durations.size() != batch.size())
    throw std::invalid_argument(
        "train_step: forced durations must match batch size");

  Vector grad = Vector::Zero(layout.total);
  StepReport report;
  double dec_sum = 0.0, prior_sum = 0.0, vq_sum = 0.0, ctc_sum = 0.0,
         total_sum = 0.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TokenSequence& y = *batch[i].tokens;
    const GroupedFrames grouped = group_frames(*batch[i].frames, cfg.g);
    const int t_super = static_cast<int>(grouped.super_frames.rows());
    const int u_count = y.size();

    const bool feasible =
        u_count >= 1 && t_super >= u_count &&
        static_cast<long long>(u_count) * cfg.K >= t_super;
    if (!feasible) {
      ++report.skipped;
      report.sampled.emplace_back();
      continue;
    }

    // Aggregate/decoder run over the padded frame sequence so that
    // g * sum(l) frames always exist.
    FrameSequence padded;
    const FrameSequence* x = batch[i].frames;
    if (grouped.padding > 0) {
      padded.frames.resize(t_super * cfg.g, batch[i].frames->dim());
      padded.frames.topRows(batch[i].frames->num_frames()) =
          batch[i].frames->frames;
      for (int p = 0; p < grouped.padding; ++p)
        padded.frames.row(batch[i].frames->num_frames() + p) =
            batch[i].frames->frames.row(batch[i].frames->num_frames() - 1);
      x = &padded;
    }

    const EncoderResult enc =
        acoustic_encoder(layout, params.values, grouped.super_frames);

    double log_z;
    if (cfg.gamma > 0.0) {
      const MarginalGradient mg = marginal_gradient(enc.em, y, cfg.K);
      log_z = mg.log_marginal;
      acoustic_encoder_backward(layout, params.values, enc,
                                grouped.super_frames,
                                -cfg.gamma * mg.d_log_trans,
                                -cfg.gamma * mg.d_log_emit, grad);
    } else {
      log_z = log_marginal(forward(enc.em, y, cfg.K));
    }
    const double ctc_nll = -log_z;

    std::vector<std::pair<DurationSequence, double>> weighted;
    if (!forced_durations.empty()) {
      const DurationSequence& l = forced_durations[i];
      if (!validate_duration(l, u_count, t_super, cfg.K)) {
        ++report.skipped;
        report.sampled.emplace_back();
        continue;
      }
      weighted.emplace_back(l, 1.0);
    } else {
      const std::vector<ScoredDuration> hyps =
          nbest_beam(enc.em, y, cfg.K, cfg.beam_train);
      if (cfg.posterior_weighting == "softmax-nbest") {
        double max_score = kNegInf;
        for (const auto& h : hyps) max_score = std::max(max_score, h.log_score);
        double norm = 0.0;
        for (const auto& h : hyps) norm += std::exp(h.log_score - max_score);
        for (const auto& h : hyps)
          weighted.emplace_back(h.durations,
                                std::exp(h.log_score - max_score) / norm);
      } else {
        weighted.emplace_back(hyps.front().durations, 1.0);
      }
    }

    ElboTerms terms;
    for (const auto& [l, w] : weighted) {
      const ElboTerms part =
          elbo_pass(layout, params.values, y, *x, l, cfg, w, grad);
      terms.decoder_nll += part.decoder_nll;
      terms.prior_kl += part.prior_kl;
      terms.vq_kl += part.vq_kl;
    }

    const LossBreakdown item_loss = total_objective(
        terms.decoder_nll, terms.prior_kl, terms.vq_kl, ctc_nll, cfg.gamma);
    dec_sum += item_loss.decoder_nll;
    prior_sum += item_loss.prior_kl;
    vq_sum += item_loss.vq_kl;
    ctc_sum += item_loss.ctc_nll;
    total_sum += item_loss.total;
    report.sampled.push_back(weighted.front().first);
    ++report.processed;
  }

  if (report.processed > 0) {
    const double inv = 1.0 / report.processed;
    grad *= inv;
    report.loss.decoder_nll = dec_sum * inv;
    report.loss.prior_kl = prior_sum * inv;
    report.loss.vq_kl = vq_sum * inv;
    report.loss.ctc_nll = ctc_sum * inv;
    report.loss.total = total_sum * inv;
    auto [updated, next_state] =
        adam_update(params.values, grad, state, cfg.learning_rate);
    params.values = std::move(updated);
    state = std::move(next_state);
  }
  return report;
}

DurationSequence infer_durations(const TokenSequence& y,
                                 const ModelParams& params) {
  const ParamLayout layout(params.spec);
  const Codebook cb = codebook_from_params(layout, params.values);
  Vector z_prev = start_code_from_params(layout, params.values);

  DurationSequence l;
  l.durations.reserve(y.size());
  for (const int token : y.tokens) {
    const StepResult c = latentnet_phi(layout, params.values, z_prev, token);
    const Vector logits = prior_logits(c.out, cb);
    int best = 0;
    for (int k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[best]) best = k;
    }
    l.durations.push_back(best + 1);
    z_prev = cb.codewords.row(best);
  }
  return l;
}

FrameSequence synthesize(const TokenSequence& y, const ModelParams& params) {
  const ParamLayout layout(params.spec);
  const auto& s = params.spec;
  const DurationSequence l = infer_durations(y, params);
  const Codebook cb = codebook_from_params(layout, params.values);

  Matrix selected(y.size(), s.D);
  for (int u = 0; u < y.size(); ++u)
    selected.row(u) = cb.codewords.row(l.durations[u] - 1);
  const Matrix z_hat = upsample(selected, l, s.g);
  const int t_frames = static_cast<int>(z_hat.rows());
  std::vector<int> y_hat(t_frames);
  {
    int t = 0;
    for (int u = 0; u < y.size(); ++u)
      for (int i = 0; i < l.durations[u] * s.g; ++i) y_hat[t++] = y.tokens[u];
  }

  FrameSequence out;
  out.frames.resize(t_frames, s.O);
  Vector x_prev = Vector::Zero(s.O);
  for (int t = 0; t < t_frames; ++t) {
    const StepResult step =
        decoder_step(layout, params.values, x_prev, z_hat.row(t), y_hat[t]);
    out.frames.row(t) = step.out;
    x_prev = step.out;
  }
  return out;
}

TrainRunResult run_training(const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.items.empty())
    throw std::invalid_argument("run_training: empty corpus");

  int vocab = 1;
  for (const CorpusItem& item : corpus.items) {
    if (item.frames.dim() != cfg.O)
      throw std::invalid_argument(
          "run_training: corpus frame dim != config O");
    for (const int t : item.tokens.tokens) vocab = std::max(vocab, t + 1);
  }

  ModelSpec spec;
  spec.V = vocab;
  spec.E = cfg.embed_dim;
  spec.H = cfg.hidden_dim;
  spec.O = cfg.O;
  spec.D = cfg.D;
  spec.g = cfg.g;
  spec.K = cfg.K;
  const ParamLayout layout(spec);

  std::mt19937_64 rng(cfg.seed);
  TrainRunResult result;
  result.params.spec = spec;
  result.params.values = init_params(layout, rng);
  result.state = adam_init(layout.total);

  const int n = static_cast<int>(corpus.items.size());
  const int batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int begin = 0; begin < n; begin += batch) {
      const int count = std::min(batch, n - begin);
      std::vector<BatchItem> items(count);
      for (int i = 0; i < count; ++i) {
        items[i] = {&corpus.items[begin + i].tokens,
                    &corpus.items[begin + i].frames};
      }
      const StepReport report =
          train_step(items, result.params, result.state, cfg);
      ++step;
      result.total_skipped += report.skipped;

      int matched = 0, total_tokens = 0;
      for (int i = 0; i < count; ++i) {
        const DurationSequence& truth =
            corpus.items[begin + i].true_durations;
        const DurationSequence& got = report.sampled[i];
        if (got.size() != truth.size()) continue;
        for (int u = 0; u < truth.size(); ++u) {
          ++total_tokens;
          if (got.durations[u] == truth.durations[u]) ++matched;
        }
      }
      const double accuracy =
          total_tokens > 0 ? static_cast<double>(matched) / total_tokens : 0.0;

      nlohmann::ordered_json line;
      line["step"] = step;
      line["decoder_nll"] = report.loss.decoder_nll;
      line["prior_kl"] = report.loss.prior_kl;
      line["vq_kl"] = report.loss.vq_kl;
      line["ctc_nll"] = report.loss.ctc_nll;
      line["total"] = report.loss.total;
      line["duration_accuracy"] = accuracy;
      line["skipped"] = report.skipped;
      result.log_lines.push_back(line.dump());

      if (step == 1) result.first_loss = report.loss;
      result.last_loss = report.loss;
    }
  }
  return result;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamState& state, const TrainConfig& cfg) {
  json j;
  j["model"] = json::parse(params_to_json(params));
  json opt;
  opt["step"] = state.step;
  json m = json::array(), v = json::array();
  for (int i = 0; i < state.m.size(); ++i) m.push_back(state.m[i]);
  for (int i = 0; i < state.v.size(); ++i) v.push_back(state.v[i]);
  opt["m"] = std::move(m);
  opt["v"] = std::move(v);
  j["optimizer"] = std::move(opt);
  j["config"] = json::parse(config_to_json(cfg));

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << '\n';
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const json j = json::parse(buffer.str());

  Checkpoint ckpt;
  ckpt.params = params_from_json(j.at("model").dump());
  const json& opt = j.at("optimizer");
  ckpt.state.step = opt.at("step").get<long long>();
  const auto m = opt.at("m").get<std::vector<double>>();
  const auto v = opt.at("v").get<std::vector<double>>();
  ckpt.state.m = Eigen::Map<const Vector>(m.data(), m.size());
  ckpt.state.v = Eigen::Map<const Vector>(v.data(), v.size());
  ckpt.config = config_from_json(j.at("config").dump());
  return ckpt;
}

}  // namespace latentdur
