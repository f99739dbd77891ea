#pragma once

#include <cstdint>
#include <vector>

#include "hypergeo/ball.hpp"

namespace hypergeo::trainer {

struct DatasetConfig {
  int depth = 3;
  int branching = 3;
  int classes = 0;  // 0 selects every leaf of the tree
  int dim = 64;
  int per_class = 25;
  double noise_scale = 0.08;
  double kappa = 0.5;
  std::uint64_t seed = 1;

  int leaf_count() const;
  int resolved_classes() const { return classes == 0 ? leaf_count() : classes; }
  void validate() const;
};

/// Ball points sampled around the leaves of a balanced hierarchy of
/// tangent-space anchors. tree[i] is the parent index of anchor i (-1 at the
/// root); the last leaf_count() anchors are the leaves, and class c maps to
/// leaf c.
struct SyntheticDataset {
  std::vector<ball::BallPoint> points;
  std::vector<int> labels;
  std::vector<int> tree;
  DatasetConfig config;

  int num_classes() const { return config.resolved_classes(); }
  ball::CurvatureMag kappa() const { return ball::CurvatureMag(config.kappa); }
};

SyntheticDataset generate_tree_dataset(const DatasetConfig& config);

/// One few-shot task: `ways` classes, `shots` support and `queries` query
/// points per class, sampled disjointly. Index fields point back into the
/// source dataset.
struct Episode {
  std::vector<ball::BallPoint> support;
  std::vector<int> support_labels;
  std::vector<int> support_indices;
  std::vector<ball::BallPoint> query;
  std::vector<int> query_labels;
  std::vector<int> query_indices;
  std::uint64_t seed = 0;
};

Episode sample_episode(const SyntheticDataset& dataset,
                       const std::vector<int>& class_pool, int ways, int shots,
                       int queries, std::uint64_t seed);

/// Deterministic class split: first ceil(60%) of class ids train, the rest
/// are held out for evaluation.
void split_classes(int num_classes, std::vector<int>& train_pool,
                   std::vector<int>& eval_pool);

}  // namespace hypergeo::trainer
