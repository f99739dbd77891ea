#pragma once

#include <vector>

#include "hypergeo/ball.hpp"

namespace hypergeo::mining {

/// One Einstein midpoint per class, ordered by ascending class id.
struct PrototypeSet {
  std::vector<ball::BallPoint> prototypes;
  std::vector<int> class_ids;

  int size() const { return static_cast<int>(prototypes.size()); }
};

/// Queries whose nearest/second-nearest distance ratio exceeds the mining
/// threshold, with the ratios aligned to the member indices.
struct HardSet {
  std::vector<int> members;
  std::vector<double> ratios;
};

/// Full per-query mining trace; one row per query in input order.
struct MiningRecord {
  int query_index = 0;
  double d1 = 0.0;
  double d2 = 0.0;
  double ratio = 0.0;
  bool selected = false;
};

PrototypeSet build_prototypes(const std::vector<ball::BallPoint>& support,
                              const std::vector<int>& labels);

/// Scores every query against the prototype set under the fixed geodesic
/// distance. ratio = d1/d2 with d1 = 0 collapsing to ratio 0; nearest ties
/// resolve to the lower class id. selected is the strict test ratio > threshold.
std::vector<MiningRecord> mine_records(const std::vector<ball::BallPoint>& queries,
                                       const PrototypeSet& protos,
                                       double threshold);

HardSet mine_hard(const std::vector<ball::BallPoint>& queries,
                  const PrototypeSet& protos, double threshold);

}  // namespace hypergeo::mining
