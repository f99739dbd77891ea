#include "hypergeo/mining.hpp"

#include <limits>
#include <map>
#include <string>

#include "hypergeo/errors.hpp"

namespace hypergeo::mining {

PrototypeSet build_prototypes(const std::vector<ball::BallPoint>& support,
                              const std::vector<int>& labels) {
  if (support.empty()) {
    throw ValidationError("build_prototypes: empty class support");
  }
  if (support.size() != labels.size()) {
    throw ValidationError("build_prototypes: support/label size mismatch");
  }
  std::map<int, std::vector<ball::BallPoint>> by_class;
  for (std::size_t i = 0; i < support.size(); ++i) {
    by_class[labels[i]].push_back(support[i]);
  }
  PrototypeSet out;
  out.prototypes.reserve(by_class.size());
  out.class_ids.reserve(by_class.size());
  for (const auto& [label, points] : by_class) {
    out.prototypes.push_back(ball::einstein_midpoint(points));
    out.class_ids.push_back(label);
  }
  return out;
}

std::vector<MiningRecord> mine_records(const std::vector<ball::BallPoint>& queries,
                                       const PrototypeSet& protos,
                                       double threshold) {
  if (protos.size() < 2) {
    throw ValidationError("mine_records: insufficient-prototypes (need at least 2)");
  }
  if (protos.prototypes.size() != protos.class_ids.size()) {
    throw ValidationError("mine_records: prototype/class id size mismatch");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("mine_records: threshold must lie in [0, 1]");
  }
  std::vector<MiningRecord> records;
  records.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    // Prototypes are in ascending class id order, so strict comparisons keep
    // the lowest id on distance ties.
    for (const ball::BallPoint& proto : protos.prototypes) {
      const double d = ball::geodesic_distance(queries[q], proto);
      if (d < d1) {
        d2 = d1;
        d1 = d;
      } else if (d < d2) {
        d2 = d;
      }
    }
    MiningRecord rec;
    rec.query_index = static_cast<int>(q);
    rec.d1 = d1;
    rec.d2 = d2;
    rec.ratio = d1 == 0.0 ? 0.0 : d1 / d2;
    rec.selected = rec.ratio > threshold;
    records.push_back(rec);
  }
  return records;
}

HardSet mine_hard(const std::vector<ball::BallPoint>& queries,
                  const PrototypeSet& protos, double threshold) {
  HardSet out;
  for (const MiningRecord& rec : mine_records(queries, protos, threshold)) {
    if (rec.selected) {
      out.members.push_back(rec.query_index);
      out.ratios.push_back(rec.ratio);
    }
  }
  return out;
}

}  // namespace hypergeo::mining
