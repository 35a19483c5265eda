#pragma once

#include "latentdur/data_io.hpp"
#include "latentdur/losses.hpp"
#include "latentdur/models.hpp"

#include <span>
#include <string>
#include <vector>

namespace latentdur {

struct AdamState {
  long long step = 0;
  Vector m;
  Vector v;
};

AdamState adam_init(int n);

/// Standard bias-corrected Adam. lr = 0 leaves params bitwise intact.
std::pair<Vector, AdamState> adam_update(const Vector& params,
                                         const Vector& grads,
                                         const AdamState& state, double lr,
                                         double beta1 = 0.9,
                                         double beta2 = 0.999,
                                         double eps = 1e-8);

struct BatchItem {
  const TokenSequence* tokens = nullptr;
  const FrameSequence* frames = nullptr;
};

struct StepReport {
  LossBreakdown loss;  // averaged over processed items
  int processed = 0;
  int skipped = 0;  // infeasible items, left out of the update
  std::vector<DurationSequence> sampled;  // best-hypothesis durations
};

/// One joint update: encoder -> constrained beam -> aggregate/latent
/// nets/decoder teacher-forced on the sampled durations -> all four
/// loss terms -> averaged gradients -> one Adam step over the flat
/// parameter vector (codebook included). When `forced_durations` is
/// given the aligner is bypassed and those durations are used instead
/// (the CTC term is still reported; with gamma = 0 it does not train).
StepReport train_step(std::span<const BatchItem> batch, ModelParams& params,
                      AdamState& state, const TrainConfig& cfg,
                      std::span<const DurationSequence> forced_durations = {});

/// Greedy prior decode: c_u = LatentNet_phi(z_prev, y_u),
/// l_u = argmax prior_logits (ties toward smaller k), z_prev = e_{l_u}.
DurationSequence infer_durations(const TokenSequence& y,
                                 const ModelParams& params);

/// infer_durations, then the free-running decoder from the zero
/// go-frame; exactly g * sum(l) output frames, mean prediction only.
FrameSequence synthesize(const TokenSequence& y, const ModelParams& params);

struct TrainRunResult {
  ModelParams params;
  AdamState state;
  std::vector<std::string> log_lines;  // one JSON object per step
  LossBreakdown first_loss;
  LossBreakdown last_loss;
  int total_skipped = 0;
};

/// Deterministic full run: init from cfg.seed, fixed batch order,
/// epochs * ceil(n / batch) steps. duration_accuracy in the log scores
/// each step's sampled durations against the stored ground truth;
/// the updates themselves never see it.
TrainRunResult run_training(const Corpus& corpus, const TrainConfig& cfg);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamState& state, const TrainConfig& cfg);

struct Checkpoint {
  ModelParams params;
  AdamState state;
  TrainConfig config;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace latentdur
