#include "latentdur/types.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace latentdur {

using nlohmann::json;

ValidationReport validate_duration(const DurationSequence& d, int u_count,
                                   int t_super, int k_max) {
  ValidationReport r;
  if (d.size() != u_count) {
    r.ok = false;
    r.index = 0;
    std::ostringstream os;
    os << "duration count " << d.size() << " != token count " << u_count;
    r.message = os.str();
    return r;
  }
  for (int u = 0; u < d.size(); ++u) {
    const int l = d.durations[u];
    if (l < 1 || l > k_max) {
      r.ok = false;
      r.index = u + 1;
      std::ostringstream os;
      os << "l_" << (u + 1) << " = " << l << " outside [1, " << k_max << "]";
      r.message = os.str();
      return r;
    }
  }
  if (d.total() != t_super) {
    r.ok = false;
    r.index = 0;
    std::ostringstream os;
    os << "durations sum to " << d.total() << ", expected " << t_super;
    r.message = os.str();
    return r;
  }
  return r;
}

std::string loss_to_json(const LossBreakdown& loss) {
  json j;
  j["decoder_nll"] = loss.decoder_nll;
  j["prior_kl"] = loss.prior_kl;
  j["vq_kl"] = loss.vq_kl;
  j["ctc_nll"] = loss.ctc_nll;
  j["total"] = loss.total;
  return j.dump();
}

void TrainConfig::validate() const {
  auto require = [](bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(K >= 1, "K must be >= 1");
  require(g >= 1, "g must be >= 1");
  require(D >= 1, "D must be >= 1");
  require(O >= 1, "O must be >= 1");
  require(sigma > 0.0, "sigma must be positive");
  require(sigma_d > 0.0, "sigma_d must be positive");
  require(gamma >= 0.0, "gamma must be nonnegative");
  require(alpha_prior >= 0.0 && beta_prior >= 0.0, "prior sg coefficients must be nonnegative");
  require(alpha_vq >= 0.0 && beta_vq >= 0.0, "vq sg coefficients must be nonnegative");
  require(alpha_prior + beta_prior > 0.0, "prior sg coefficients must not both be zero");
  require(alpha_vq + beta_vq > 0.0, "vq sg coefficients must not both be zero");
  require(learning_rate >= 0.0, "learning_rate must be nonnegative");
  require(beam_train >= 1, "beam_train must be >= 1");
  require(beam_infer >= 1, "beam_infer must be >= 1");
  require(epochs >= 0, "epochs must be nonnegative");
  require(batch_size >= 0, "batch_size must be nonnegative");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(posterior_weighting == "best" || posterior_weighting == "softmax-nbest",
          "posterior_weighting must be \"best\" or \"softmax-nbest\"");
}

std::string config_to_json(const TrainConfig& cfg) {
  json j;
  j["K"] = cfg.K;
  j["g"] = cfg.g;
  j["D"] = cfg.D;
  j["O"] = cfg.O;
  j["sigma"] = cfg.sigma;
  j["sigma_d"] = cfg.sigma_d;
  j["gamma"] = cfg.gamma;
  j["alpha_prior"] = cfg.alpha_prior;
  j["beta_prior"] = cfg.beta_prior;
  j["alpha_vq"] = cfg.alpha_vq;
  j["beta_vq"] = cfg.beta_vq;
  j["learning_rate"] = cfg.learning_rate;
  j["beam_train"] = cfg.beam_train;
  j["beam_infer"] = cfg.beam_infer;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["posterior_weighting"] = cfg.posterior_weighting;
  j["embed_dim"] = cfg.embed_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig cfg;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("K", cfg.K);
  get("g", cfg.g);
  get("D", cfg.D);
  get("O", cfg.O);
  get("sigma", cfg.sigma);
  get("sigma_d", cfg.sigma_d);
  get("gamma", cfg.gamma);
  get("alpha_prior", cfg.alpha_prior);
  get("beta_prior", cfg.beta_prior);
  get("alpha_vq", cfg.alpha_vq);
  get("beta_vq", cfg.beta_vq);
  get("learning_rate", cfg.learning_rate);
  get("beam_train", cfg.beam_train);
  get("beam_infer", cfg.beam_infer);
  get("seed", cfg.seed);
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("posterior_weighting", cfg.posterior_weighting);
  get("embed_dim", cfg.embed_dim);
  get("hidden_dim", cfg.hidden_dim);
  cfg.validate();
  return cfg;
}

}  // namespace latentdur
