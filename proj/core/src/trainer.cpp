#include "hypergeo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "hypergeo/errors.hpp"
#include "hypergeo/rng.hpp"
#include "hypergeo/tensor.hpp"

namespace hypergeo::trainer {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kNegativeStream = 2;

int nearest_prototype(const ball::BallPoint& query,
                      const mining::PrototypeSet& protos) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int p = 0; p < protos.size(); ++p) {
    const double d = ball::geodesic_distance(query, protos.prototypes[p]);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

int true_column(const mining::PrototypeSet& protos, int label) {
  for (int p = 0; p < protos.size(); ++p) {
    if (protos.class_ids[p] == label) return p;
  }
  throw ValidationError("episode label " + std::to_string(label) +
                        " has no prototype");
}

/// Loss node over the mined queries of one episode; the generator batch holds
/// one row per (hard query, prototype) pair.
diff::Tensor episode_loss_node(diff::Tape& tape, const ghdm::GeneratorBatch& batch,
                               const ghdm::GhdmConfig& gcfg, const Episode& ep,
                               const mining::PrototypeSet& protos,
                               const std::vector<int>& hard,
                               const TrainConfig& cfg, Rng& negative_rng) {
  const int p = protos.size();
  std::vector<diff::Tensor> terms;
  terms.reserve(hard.size());
  for (std::size_t h = 0; h < hard.size(); ++h) {
    const int q = hard[h];
    const ball::BallPoint& query = ep.query[static_cast<std::size_t>(q)];
    std::vector<diff::Tensor> dists;
    dists.reserve(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) {
      const int row = static_cast<int>(h) * p + j;
      dists.push_back(ghdm::adapted_distance_node(
          tape, batch, gcfg, row, query, protos.prototypes[static_cast<std::size_t>(j)]));
    }
    const int truth = true_column(protos, ep.query_labels[static_cast<std::size_t>(q)]);
    if (cfg.loss_kind == LossKind::kCrossEntropy) {
      diff::Tensor logits = diff::reshape(dists[0], {1});
      for (int j = 1; j < p; ++j) {
        logits = diff::concat(logits, diff::reshape(dists[static_cast<std::size_t>(j)], {1}));
      }
      const diff::Tensor probs = diff::softmax(diff::neg(logits));
      std::vector<double> onehot(static_cast<std::size_t>(p), 0.0);
      onehot[static_cast<std::size_t>(truth)] = 1.0;
      const diff::Tensor picked =
          diff::sum_pool(diff::hadamard(probs, tape.constant(onehot, {p})));
      terms.push_back(diff::neg(diff::log(diff::clamp(picked, kProbFloor, 1.0))));
    } else {
      int neg = static_cast<int>(negative_rng.integer(static_cast<std::uint64_t>(p - 1)));
      if (neg >= truth) ++neg;
      const diff::Tensor hinge =
          diff::add(tape.scalar(cfg.margin),
                    diff::sub(dists[static_cast<std::size_t>(truth)],
                              dists[static_cast<std::size_t>(neg)]));
      terms.push_back(
          diff::clamp(hinge, 0.0, std::numeric_limits<double>::infinity()));
    }
  }
  diff::Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = diff::add(total, terms[i]);
  return diff::mul(total, tape.scalar(1.0 / static_cast<double>(terms.size())));
}

struct EpisodeOutcome {
  int queries = 0;
  int adapted_correct = 0;
  int fixed_correct = 0;
  int hard_total = 0;
  int fixed_hard_correct = 0;
  int fixed_easy_correct = 0;
};

EpisodeOutcome score_episode(const ghdm::GeneratorParams& params,
                             const SyntheticDataset& ds, const TrainConfig& cfg,
                             const std::vector<int>& pool, std::uint64_t seed) {
  const Episode ep =
      sample_episode(ds, pool, cfg.ways, cfg.shots, cfg.queries, seed);
  const EpisodeScores scores = episode_logits(params, ep, cfg);

  EpisodeOutcome out;
  out.queries = static_cast<int>(ep.query.size());
  std::vector<bool> is_hard(ep.query.size(), false);
  for (int q : scores.hard) is_hard[static_cast<std::size_t>(q)] = true;
  for (std::size_t q = 0; q < ep.query.size(); ++q) {
    const int truth = ep.query_labels[q];
    if (scores.predictions[q] == truth) ++out.adapted_correct;
    const int fixed_pred =
        scores.protos.class_ids[static_cast<std::size_t>(nearest_prototype(ep.query[q], scores.protos))];
    const bool fixed_ok = fixed_pred == truth;
    if (fixed_ok) ++out.fixed_correct;
    if (is_hard[q]) {
      ++out.hard_total;
      if (fixed_ok) ++out.fixed_hard_correct;
    } else if (fixed_ok) {
      ++out.fixed_easy_correct;
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (ways < 2) throw ValidationError("TrainConfig: ways must be >= 2");
  if (shots < 1) throw ValidationError("TrainConfig: shots must be >= 1");
  if (queries < 1) throw ValidationError("TrainConfig: queries must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("TrainConfig: threshold must lie in [0, 1]");
  }
  if (rank < 1) throw ValidationError("TrainConfig: rank must be >= 1");
  if (steps < 0) throw ValidationError("TrainConfig: steps must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ValidationError("TrainConfig: lr must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("TrainConfig: momentum must lie in [0, 1)");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ValidationError("TrainConfig: margin must be finite and >= 0");
  }
}

ghdm::GhdmConfig TrainConfig::generator_config(const SyntheticDataset& dataset) const {
  ghdm::GhdmConfig gcfg;
  gcfg.dim = dataset.config.dim;
  gcfg.rank = rank;
  gcfg.hidden = hidden;
  gcfg.c_min = c_min;
  gcfg.c_max = c_max;
  gcfg.base_kappa = dataset.config.kappa;
  gcfg.residual_enabled = residual_enabled;
  gcfg.validate();
  return gcfg;
}

EpisodeScores episode_logits(const ghdm::GeneratorParams& params,
                             const Episode& episode, const TrainConfig& config) {
  if (episode.query.empty() || episode.support.empty()) {
    throw ValidationError("episode_logits: empty episode");
  }
  EpisodeScores out;
  out.protos = mining::build_prototypes(episode.support, episode.support_labels);
  out.mining = mining::mine_records(episode.query, out.protos, config.threshold);
  for (const mining::MiningRecord& rec : out.mining) {
    if (rec.selected) out.hard.push_back(rec.query_index);
  }

  const int p = out.protos.size();
  out.hard_logits.resize(static_cast<Eigen::Index>(out.hard.size()), p);
  out.predictions.assign(episode.query.size(), -1);

  for (std::size_t h = 0; h < out.hard.size(); ++h) {
    const ball::BallPoint& query =
        episode.query[static_cast<std::size_t>(out.hard[h])];
    Eigen::VectorXd neg_dist(p);
    for (int j = 0; j < p; ++j) {
      neg_dist[j] = -ghdm::adapted_distance(
          params, query, out.protos.prototypes[static_cast<std::size_t>(j)]);
    }
    const Eigen::VectorXd shifted =
        (neg_dist.array() - neg_dist.maxCoeff()).exp();
    out.hard_logits.row(static_cast<Eigen::Index>(h)) =
        (shifted / shifted.sum()).transpose();
    int best = 0;
    for (int j = 1; j < p; ++j) {
      if (neg_dist[j] > neg_dist[best]) best = j;
    }
    out.predictions[static_cast<std::size_t>(out.hard[h])] =
        out.protos.class_ids[static_cast<std::size_t>(best)];
  }
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    if (out.predictions[q] >= 0) continue;  // hard query, already scored
    out.predictions[q] = out.protos.class_ids[static_cast<std::size_t>(
        nearest_prototype(episode.query[q], out.protos))];
  }
  return out;
}

double cross_entropy(const Eigen::MatrixXd& probs,
                     const std::vector<int>& label_cols) {
  if (static_cast<std::size_t>(probs.rows()) != label_cols.size()) {
    throw ValidationError("cross_entropy: row/label count mismatch");
  }
  if (probs.rows() == 0) throw ValidationError("cross_entropy: no rows");
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int col = label_cols[static_cast<std::size_t>(r)];
    if (col < 0 || col >= probs.cols()) {
      throw ValidationError("cross_entropy: label column out of range");
    }
    total += -std::log(std::max(probs(r, col), kProbFloor));
  }
  return total / static_cast<double>(probs.rows());
}

double contrastive_loss(const std::vector<double>& d_pos,
                        const std::vector<double>& d_neg, double margin) {
  if (d_pos.size() != d_neg.size() || d_pos.empty()) {
    throw ValidationError("contrastive_loss: triple lists empty or mismatched");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d_pos.size(); ++i) {
    total += std::max(0.0, margin + d_pos[i] - d_neg[i]);
  }
  return total / static_cast<double>(d_pos.size());
}

TrainResult train(const SyntheticDataset& dataset, const TrainConfig& config) {
  return train(dataset, config,
               ghdm::GeneratorParams::random_init(config.generator_config(dataset),
                                                  config.seed));
}

TrainResult train(const SyntheticDataset& dataset, const TrainConfig& config,
                  ghdm::GeneratorParams initial) {
  config.validate();
  const ghdm::GhdmConfig gcfg = config.generator_config(dataset);
  const ghdm::GhdmConfig& pcfg = initial.config();
  if (pcfg.dim != gcfg.dim || pcfg.rank != gcfg.rank ||
      pcfg.hidden_width() != gcfg.hidden_width() || pcfg.c_min != gcfg.c_min ||
      pcfg.c_max != gcfg.c_max || pcfg.base_kappa != gcfg.base_kappa ||
      pcfg.residual_enabled != gcfg.residual_enabled) {
    throw ValidationError("train: initial parameters do not match the config");
  }

  std::vector<int> train_pool;
  std::vector<int> eval_pool;
  split_classes(dataset.num_classes(), train_pool, eval_pool);
  if (static_cast<int>(train_pool.size()) < config.ways) {
    throw ValidationError("train: fewer training classes than ways");
  }

  TrainResult result{std::move(initial), {}, {}, 0.0};
  result.loss_trace.reserve(static_cast<std::size_t>(config.steps));
  const std::uint64_t train_root = substream_seed(config.seed, kTrainStream);

  for (int step = 0; step < config.steps; ++step) {
    const std::uint64_t ep_seed =
        substream_seed(train_root, static_cast<std::uint64_t>(step));
    const Episode ep = sample_episode(dataset, train_pool, config.ways,
                                      config.shots, config.queries, ep_seed);
    const mining::PrototypeSet protos =
        mining::build_prototypes(ep.support, ep.support_labels);
    std::vector<int> hard;
    for (const mining::MiningRecord& rec :
         mining::mine_records(ep.query, protos, config.threshold)) {
      if (rec.selected) hard.push_back(rec.query_index);
    }
    result.hard_counts.push_back(static_cast<int>(hard.size()));
    if (hard.empty()) {
      result.loss_trace.push_back(0.0);
      continue;
    }

    const int p = protos.size();
    Eigen::MatrixXd fi(static_cast<Eigen::Index>(hard.size()) * p, gcfg.dim);
    Eigen::MatrixXd fj(fi.rows(), gcfg.dim);
    for (std::size_t h = 0; h < hard.size(); ++h) {
      const Eigen::VectorXd qf = ghdm::origin_features(
          ep.query[static_cast<std::size_t>(hard[h])]);
      for (int j = 0; j < p; ++j) {
        const Eigen::Index row = static_cast<Eigen::Index>(h) * p + j;
        fi.row(row) = qf.transpose();
        fj.row(row) =
            ghdm::origin_features(protos.prototypes[static_cast<std::size_t>(j)])
                .transpose();
      }
    }

    double loss_value = 0.0;
    try {
      diff::Tape tape;
      const ghdm::BoundParams bound = ghdm::bind_generators(tape, result.params);
      const ghdm::GeneratorBatch batch =
          ghdm::run_generators(tape, bound, gcfg, fi, fj);
      Rng negative_rng(substream_seed(ep_seed, kNegativeStream));
      const diff::Tensor loss = episode_loss_node(tape, batch, gcfg, ep, protos,
                                                  hard, config, negative_rng);
      loss_value = loss.value();
      tape.backward(loss);
      ghdm::accumulate_generator_grads(bound, result.params);
    } catch (const NumericalFault& fault) {
      throw NumericalFault("train step " + std::to_string(step), fault.what());
    }
    if (!std::isfinite(loss_value)) {
      throw NumericalFault("train step " + std::to_string(step),
                           "loss diverged to a non-finite value");
    }
    result.loss_trace.push_back(loss_value);
    if (config.lr > 0.0) {
      diff::sgd_step(result.params.store(), config.lr, config.momentum);
    } else {
      for (diff::Param& param : result.params.store()) param.zero_grad();
    }
  }

  if (!result.loss_trace.empty()) {
    const std::size_t window = std::max<std::size_t>(
        1, result.loss_trace.size() / 10);
    double sum = 0.0;
    for (std::size_t i = result.loss_trace.size() - window;
         i < result.loss_trace.size(); ++i) {
      sum += result.loss_trace[i];
    }
    result.final_smoothed_loss = sum / static_cast<double>(window);
  }
  return result;
}

EvalResult evaluate(const ghdm::GeneratorParams& params,
                    const SyntheticDataset& dataset, const TrainConfig& config,
                    int episodes, int threads) {
  config.validate();
  if (episodes < 1) throw ValidationError("evaluate: episodes must be >= 1");
  std::vector<int> train_pool;
  std::vector<int> eval_pool;
  split_classes(dataset.num_classes(), train_pool, eval_pool);
  if (static_cast<int>(eval_pool.size()) < config.ways) {
    throw ValidationError("evaluate: fewer held-out classes than ways");
  }

  const std::uint64_t eval_root = substream_seed(config.seed, kEvalStream);
  std::vector<EpisodeOutcome> outcomes(static_cast<std::size_t>(episodes));
  const int workers = std::max(1, std::min(threads, episodes));
  if (workers == 1) {
    for (int e = 0; e < episodes; ++e) {
      outcomes[static_cast<std::size_t>(e)] =
          score_episode(params, dataset, config, eval_pool,
                        substream_seed(eval_root, static_cast<std::uint64_t>(e)));
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int e = w; e < episodes; e += workers) {
          outcomes[static_cast<std::size_t>(e)] = score_episode(
              params, dataset, config, eval_pool,
              substream_seed(eval_root, static_cast<std::uint64_t>(e)));
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  EvalResult result;
  result.episodes = episodes;
  Eigen::VectorXd adapted_acc(episodes);
  Eigen::VectorXd fixed_acc(episodes);
  long long hard_total = 0;
  long long query_total = 0;
  long long fixed_hard_correct = 0;
  long long fixed_easy_correct = 0;
  for (int e = 0; e < episodes; ++e) {
    const EpisodeOutcome& o = outcomes[static_cast<std::size_t>(e)];
    adapted_acc[e] = static_cast<double>(o.adapted_correct) / o.queries;
    fixed_acc[e] = static_cast<double>(o.fixed_correct) / o.queries;
    hard_total += o.hard_total;
    query_total += o.queries;
    fixed_hard_correct += o.fixed_hard_correct;
    fixed_easy_correct += o.fixed_easy_correct;
  }
  result.adapted_accuracy = adapted_acc.mean();
  result.fixed_accuracy = fixed_acc.mean();
  if (episodes > 1) {
    const double n = static_cast<double>(episodes);
    const double sd_a = std::sqrt(
        (adapted_acc.array() - result.adapted_accuracy).square().sum() / (n - 1.0));
    const double sd_f = std::sqrt(
        (fixed_acc.array() - result.fixed_accuracy).square().sum() / (n - 1.0));
    result.adapted_ci = 1.96 * sd_a / std::sqrt(n);
    result.fixed_ci = 1.96 * sd_f / std::sqrt(n);
  }
  result.hard_fraction =
      static_cast<double>(hard_total) / static_cast<double>(query_total);
  const long long easy_total = query_total - hard_total;
  result.fixed_hard_accuracy =
      hard_total > 0 ? static_cast<double>(fixed_hard_correct) / hard_total : 0.0;
  result.fixed_easy_accuracy =
      easy_total > 0 ? static_cast<double>(fixed_easy_correct) / easy_total : 0.0;
  return result;
}

}  // namespace hypergeo::trainer
