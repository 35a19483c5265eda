#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentdur {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when no alignment satisfies the duration constraints for a
/// given (T', U, K) instance.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Discrete input tokens y_1..y_U, ids in [0, V).
struct TokenSequence {
  std::vector<int> tokens;

  int size() const { return static_cast<int>(tokens.size()); }
};

/// Acoustic frames x_1..x_T as a T x O matrix, one frame per row.
struct FrameSequence {
  Matrix frames;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

/// Codebook of K code words, one per row (K x D). Code word index k
/// (1-based in formulas, 0-based here) doubles as the duration value;
/// the frame-level duration of index k is g * (k + 1).
struct Codebook {
  Matrix codewords;

  int size() const { return static_cast<int>(codewords.rows()); }
  int dim() const { return static_cast<int>(codewords.cols()); }
};

/// Per-token durations l_1..l_U in super-frame units, each in [1, K].
struct DurationSequence {
  std::vector<int> durations;

  int size() const { return static_cast<int>(durations.size()); }
  int total() const {
    return std::accumulate(durations.begin(), durations.end(), 0);
  }
};

enum class Transition : std::uint8_t { Blank = 0, Shift = 1 };

/// Frame-level alignment path a_1..a_T'. a_1 is always Shift (entry
/// into the first token); the number of Shifts equals U.
struct Alignment {
  std::vector<Transition> transitions;

  int size() const { return static_cast<int>(transitions.size()); }
};

/// Result of a constraint check. `index` is the 1-based token index of
/// the first elementwise violation, or 0 for sequence-level violations.
struct ValidationReport {
  bool ok = true;
  int index = 0;
  std::string message;

  explicit operator bool() const { return ok; }
};

/// ok iff durations has length U, every l_u is in [1, K], and the
/// durations sum to t_super. Reports the first violated constraint.
ValidationReport validate_duration(const DurationSequence& d, int u_count,
                                   int t_super, int k_max);

/// The four objective terms and their weighted total,
/// total = decoder_nll + prior_kl + vq_kl + gamma * ctc_nll.
struct LossBreakdown {
  double decoder_nll = 0.0;
  double prior_kl = 0.0;
  double vq_kl = 0.0;
  double ctc_nll = 0.0;
  double total = 0.0;
};

std::string loss_to_json(const LossBreakdown& loss);

/// Training hyperparameters. Defaults follow the reference setting:
/// durations grouped g=3 frames per unit with K=13 codewords of
/// dimension 32, sigma=0.4, sigma_d=3.0, gamma=0.5, Adam at 5e-5,
/// beam width 3 for training and 10 for inference.
struct TrainConfig {
  int K = 13;
  int g = 3;
  int D = 32;
  int O = 80;
  double sigma = 0.4;
  double sigma_d = 3.0;
  double gamma = 0.5;
  double alpha_prior = 1.0;
  double beta_prior = 0.0;
  double alpha_vq = 2.0;
  double beta_vq = 1.0;
  double learning_rate = 5e-5;
  int beam_train = 3;
  int beam_infer = 10;
  std::uint64_t seed = 0;
  int epochs = 1;
  // Artifact knobs, not part of the reference setting.
  int batch_size = 0;  // 0 = full batch
  std::string posterior_weighting = "best";  // "best" | "softmax-nbest"
  int embed_dim = 16;
  int hidden_dim = 32;

  void validate() const;  // throws std::invalid_argument
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

}  // namespace latentdur
