#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latentdur/types.hpp"

#include <nlohmann/json.hpp>

using namespace latentdur;
using nlohmann::json;

TEST_CASE("validate_duration accepts valid sequences") {
  CHECK(validate_duration(DurationSequence{{2, 3}}, 2, 5, 3).ok);
  CHECK(validate_duration(DurationSequence{{1}}, 1, 1, 1).ok);
}

TEST_CASE("validate_duration reports the first violated constraint") {
  const ValidationReport bound =
      validate_duration(DurationSequence{{4, 1}}, 2, 5, 3);
  CHECK_FALSE(bound.ok);
  CHECK(bound.index == 1);  // l_1 > K

  const ValidationReport len =
      validate_duration(DurationSequence{{2, 3}}, 3, 5, 3);
  CHECK_FALSE(len.ok);
  CHECK(len.index == 0);

  const ValidationReport sum =
      validate_duration(DurationSequence{{2, 3}}, 2, 6, 3);
  CHECK_FALSE(sum.ok);
  CHECK(sum.index == 0);

  const ValidationReport low =
      validate_duration(DurationSequence{{1, 0, 2}}, 3, 3, 3);
  CHECK_FALSE(low.ok);
  CHECK(low.index == 2);
}

TEST_CASE("TrainConfig defaults match the reference setting") {
  const TrainConfig cfg;
  CHECK(cfg.K == 13);
  CHECK(cfg.g == 3);
  CHECK(cfg.D == 32);
  CHECK(cfg.sigma == 0.4);
  CHECK(cfg.sigma_d == 3.0);
  CHECK(cfg.gamma == 0.5);
  CHECK(cfg.alpha_prior == 1.0);
  CHECK(cfg.beta_prior == 0.0);
  CHECK(cfg.alpha_vq == 2.0);
  CHECK(cfg.beta_vq == 1.0);
  CHECK(cfg.learning_rate == 5e-5);
  CHECK(cfg.beam_train == 3);
  CHECK(cfg.beam_infer == 10);
}

TEST_CASE("TrainConfig JSON uses the canonical field names") {
  TrainConfig cfg;
  cfg.K = 5;
  cfg.g = 1;
  cfg.O = 8;
  cfg.seed = 42;
  cfg.epochs = 7;
  const json j = json::parse(config_to_json(cfg));
  for (const char* key :
       {"K", "g", "D", "O", "sigma", "sigma_d", "gamma", "alpha_prior",
        "beta_prior", "alpha_vq", "beta_vq", "learning_rate", "beam_train",
        "beam_infer", "seed", "epochs"}) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }

  const TrainConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.K == cfg.K);
  CHECK(back.g == cfg.g);
  CHECK(back.O == cfg.O);
  CHECK(back.sigma == cfg.sigma);
  CHECK(back.sigma_d == cfg.sigma_d);
  CHECK(back.gamma == cfg.gamma);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.seed == cfg.seed);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.posterior_weighting == cfg.posterior_weighting);
}

TEST_CASE("TrainConfig partial JSON falls back to defaults") {
  const TrainConfig cfg = config_from_json(R"({"K": 5, "g": 1})");
  CHECK(cfg.K == 5);
  CHECK(cfg.g == 1);
  CHECK(cfg.D == 32);
  CHECK(cfg.sigma == 0.4);
}

TEST_CASE("TrainConfig rejects invalid values") {
  CHECK_THROWS_AS(config_from_json(R"({"sigma": 0.0})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"beam_train": 0})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"posterior_weighting": "bogus"})"),
                  std::invalid_argument);
}

TEST_CASE("LossBreakdown serializes all five terms") {
  LossBreakdown loss;
  loss.decoder_nll = 1.0;
  loss.prior_kl = 2.0;
  loss.vq_kl = 3.0;
  loss.ctc_nll = 4.0;
  loss.total = 8.0;
  const json j = json::parse(loss_to_json(loss));
  CHECK(j.at("decoder_nll").get<double>() == 1.0);
  CHECK(j.at("prior_kl").get<double>() == 2.0);
  CHECK(j.at("vq_kl").get<double>() == 3.0);
  CHECK(j.at("ctc_nll").get<double>() == 4.0);
  CHECK(j.at("total").get<double>() == 8.0);
}
