#include "hypergeo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypergeo/errors.hpp"
#include "hypergeo/rng.hpp"

namespace hypergeo::trainer {

namespace {

constexpr double kRootOffsetNorm = 1.2;
constexpr double kLevelDecay = 0.6;

Eigen::VectorXd random_direction(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace

int DatasetConfig::leaf_count() const {
  long long leaves = 1;
  for (int level = 0; level < depth; ++level) {
    leaves *= branching;
    if (leaves > 1'000'000) {
      throw ValidationError("DatasetConfig: tree has more than 1e6 leaves");
    }
  }
  return static_cast<int>(leaves);
}

void DatasetConfig::validate() const {
  if (depth < 2) throw ValidationError("DatasetConfig: depth must be >= 2");
  if (branching < 2) throw ValidationError("DatasetConfig: branching must be >= 2");
  if (dim < 1) throw ValidationError("DatasetConfig: dim must be >= 1");
  if (per_class < 1) throw ValidationError("DatasetConfig: per_class must be >= 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ValidationError("DatasetConfig: noise_scale must be finite and >= 0");
  }
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw ValidationError("DatasetConfig: kappa must be finite and > 0");
  }
  const int leaves = leaf_count();
  if (classes < 0 || classes > leaves) {
    throw ValidationError("DatasetConfig: classes must lie in [0, leaf count]");
  }
  if (resolved_classes() < 2) {
    throw ValidationError("DatasetConfig: need at least 2 classes");
  }
}

SyntheticDataset generate_tree_dataset(const DatasetConfig& config) {
  config.validate();
  Rng rng(config.seed);

  SyntheticDataset ds;
  ds.config = config;
  const ball::CurvatureMag kappa(config.kappa);
  const ball::BallPoint origin(Eigen::VectorXd::Zero(config.dim), kappa);

  // Anchors breadth-first: children of node i at level l sit at the parent
  // anchor plus a random radial offset whose norm shrinks per level.
  std::vector<Eigen::VectorXd> anchors;
  anchors.push_back(Eigen::VectorXd::Zero(config.dim));
  ds.tree.push_back(-1);
  int level_begin = 0;
  int level_end = 1;
  for (int level = 1; level <= config.depth; ++level) {
    const double offset_norm = kRootOffsetNorm * std::pow(kLevelDecay, level - 1);
    for (int parent = level_begin; parent < level_end; ++parent) {
      for (int child = 0; child < config.branching; ++child) {
        anchors.push_back(anchors[parent] + offset_norm * random_direction(rng, config.dim));
        ds.tree.push_back(parent);
      }
    }
    level_begin = level_end;
    level_end = static_cast<int>(anchors.size());
  }
  const int leaves = config.leaf_count();
  const int first_leaf = static_cast<int>(anchors.size()) - leaves;
  const int num_classes = config.resolved_classes();

  // One draw per dimension, shared by the whole dataset: anisotropic noise
  // gives the projection generator a consistent signal to pick up.
  Eigen::VectorXd dim_scales(config.dim);
  for (int d = 0; d < config.dim; ++d) {
    dim_scales[d] = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  }

  ds.points.reserve(static_cast<std::size_t>(num_classes) * config.per_class);
  ds.labels.reserve(ds.points.capacity());
  for (int c = 0; c < num_classes; ++c) {
    const Eigen::VectorXd& anchor = anchors[first_leaf + c];
    for (int s = 0; s < config.per_class; ++s) {
      Eigen::VectorXd tangent = anchor;
      if (config.noise_scale > 0.0) {
        for (int d = 0; d < config.dim; ++d) {
          tangent[d] += config.noise_scale * dim_scales[d] * rng.normal();
        }
      }
      ds.points.push_back(ball::exp_map(ball::TangentVector(tangent, origin)));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Episode sample_episode(const SyntheticDataset& dataset,
                       const std::vector<int>& class_pool, int ways, int shots,
                       int queries, std::uint64_t seed) {
  if (ways < 2) throw ValidationError("sample_episode: ways must be >= 2");
  if (shots < 1 || queries < 1) {
    throw ValidationError("sample_episode: shots and queries must be >= 1");
  }
  if (static_cast<int>(class_pool.size()) < ways) {
    throw ValidationError("sample_episode: class pool smaller than ways");
  }

  std::vector<std::vector<int>> members(dataset.num_classes());
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    const int label = dataset.labels[i];
    if (label < 0 || label >= dataset.num_classes()) {
      throw ValidationError("sample_episode: label out of range");
    }
    members[label].push_back(static_cast<int>(i));
  }
  const int need = shots + queries;
  for (int c : class_pool) {
    if (c < 0 || c >= dataset.num_classes()) {
      throw ValidationError("sample_episode: class pool id out of range");
    }
    if (static_cast<int>(members[c].size()) < need) {
      throw ValidationError("sample_episode: class " + std::to_string(c) +
                            " has fewer than shots+queries points");
    }
  }

  Rng rng(seed);
  const std::vector<int> picked =
      rng.sample_without_replacement(static_cast<int>(class_pool.size()), ways);

  Episode ep;
  ep.seed = seed;
  for (int pi : picked) {
    const int c = class_pool[static_cast<std::size_t>(pi)];
    const std::vector<int>& pool = members[c];
    const std::vector<int> chosen =
        rng.sample_without_replacement(static_cast<int>(pool.size()), need);
    for (int s = 0; s < shots; ++s) {
      const int idx = pool[static_cast<std::size_t>(chosen[static_cast<std::size_t>(s)])];
      ep.support.push_back(dataset.points[static_cast<std::size_t>(idx)]);
      ep.support_labels.push_back(c);
      ep.support_indices.push_back(idx);
    }
    for (int q = 0; q < queries; ++q) {
      const int idx = pool[static_cast<std::size_t>(chosen[static_cast<std::size_t>(shots + q)])];
      ep.query.push_back(dataset.points[static_cast<std::size_t>(idx)]);
      ep.query_labels.push_back(c);
      ep.query_indices.push_back(idx);
    }
  }
  return ep;
}

void split_classes(int num_classes, std::vector<int>& train_pool,
                   std::vector<int>& eval_pool) {
  if (num_classes < 2) {
    throw ValidationError("split_classes: need at least 2 classes");
  }
  train_pool.clear();
  eval_pool.clear();
  const int train_count =
      static_cast<int>(std::ceil(0.6 * static_cast<double>(num_classes)));
  for (int c = 0; c < num_classes; ++c) {
    (c < train_count ? train_pool : eval_pool).push_back(c);
  }
}

}  // namespace hypergeo::trainer
