#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "hypergeo/dataset.hpp"
#include "hypergeo/ghdm.hpp"
#include "hypergeo/mining.hpp"

namespace hypergeo::trainer {

enum class LossKind { kCrossEntropy, kContrastive };

struct TrainConfig {
  int ways = 5;
  int shots = 5;
  int queries = 15;
  double threshold = 0.96;
  int rank = 16;
  int hidden = 0;  // 0 defers to the generator default
  double c_min = 1e-4;
  double c_max = 3.0;
  double lr = 0.05;
  double momentum = 0.9;
  int steps = 2000;
  LossKind loss_kind = LossKind::kCrossEntropy;
  double margin = 1.0;
  bool residual_enabled = true;
  std::uint64_t seed = 1;

  void validate() const;
  ghdm::GhdmConfig generator_config(const SyntheticDataset& dataset) const;
};

/// Scored episode: mined hard queries get adapted-measure softmax rows (one
/// column per prototype, ascending class id); easy queries fall through to the
/// nearest prototype under the fixed geodesic.
struct EpisodeScores {
  mining::PrototypeSet protos;
  std::vector<mining::MiningRecord> mining;
  std::vector<int> hard;            // indices into the episode query list
  Eigen::MatrixXd hard_logits;      // |hard| x p, rows sum to 1
  std::vector<int> predictions;     // predicted class id per query
};

EpisodeScores episode_logits(const ghdm::GeneratorParams& params,
                             const Episode& episode, const TrainConfig& config);

/// Mean negative log probability of the true column; probabilities are
/// floored at 1e-12 before the log.
double cross_entropy(const Eigen::MatrixXd& probs,
                     const std::vector<int>& label_cols);

/// Mean hinge max(0, margin + d_pos - d_neg) over aligned triples.
double contrastive_loss(const std::vector<double>& d_pos,
                        const std::vector<double>& d_neg, double margin);

struct TrainResult {
  ghdm::GeneratorParams params;
  std::vector<double> loss_trace;   // one entry per step
  std::vector<int> hard_counts;     // mined set size per step
  double final_smoothed_loss = 0.0; // mean of the last max(1, steps/10) losses
};

TrainResult train(const SyntheticDataset& dataset, const TrainConfig& config);
TrainResult train(const SyntheticDataset& dataset, const TrainConfig& config,
                  ghdm::GeneratorParams initial);

struct EvalResult {
  int episodes = 0;
  double adapted_accuracy = 0.0;
  double adapted_ci = 0.0;          // 95% half width, normal approximation
  double fixed_accuracy = 0.0;
  double fixed_ci = 0.0;
  double hard_fraction = 0.0;       // pooled over all episode queries
  double fixed_easy_accuracy = 0.0; // fixed measure, easy queries only
  double fixed_hard_accuracy = 0.0; // fixed measure, hard queries only
};

/// Held-out evaluation on classes disjoint from the training split. The
/// adapted pipeline and the fixed-measure baseline score identical episodes.
EvalResult evaluate(const ghdm::GeneratorParams& params,
                    const SyntheticDataset& dataset, const TrainConfig& config,
                    int episodes, int threads = 1);

}  // namespace hypergeo::trainer
