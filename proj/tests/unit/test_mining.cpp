#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hypergeo/mining.hpp"
#include "hypergeo/rng.hpp"

using namespace hypergeo;
using ball::BallPoint;
using ball::CurvatureMag;
using Eigen::VectorXd;

namespace {

const CurvatureMag kBase(0.5);

BallPoint pt(std::initializer_list<double> coords) {
  VectorXd v(static_cast<Eigen::Index>(coords.size()));
  Eigen::Index i = 0;
  for (double c : coords) v[i++] = c;
  return BallPoint(v, kBase);
}

BallPoint random_point(Rng& rng, int dim, double hi = 0.8) {
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  const double target = rng.uniform(0.05, hi) * kBase.ball_radius();
  return BallPoint(v * (target / v.norm()), kBase);
}

/// Independent selection oracle: sort every (distance, class id) pair and read
/// the two front entries, instead of the production single-pass scan.
mining::MiningRecord oracle_record(const BallPoint& q,
                                   const mining::PrototypeSet& protos,
                                   double threshold, int index) {
  std::vector<std::pair<double, int>> ranked;
  for (int p = 0; p < protos.size(); ++p) {
    ranked.emplace_back(ball::geodesic_distance(q, protos.prototypes[p]),
                        protos.class_ids[p]);
  }
  std::sort(ranked.begin(), ranked.end());
  mining::MiningRecord rec;
  rec.query_index = index;
  rec.d1 = ranked[0].first;
  rec.d2 = ranked[1].first;
  rec.ratio = rec.d1 == 0.0 ? 0.0 : rec.d1 / rec.d2;
  rec.selected = rec.ratio > threshold;
  return rec;
}

}  // namespace

TEST_CASE("one-shot prototypes reproduce their support point") {
  Rng rng(5);
  const std::vector<BallPoint> support{random_point(rng, 4), random_point(rng, 4),
                                       random_point(rng, 4)};
  const mining::PrototypeSet protos =
      mining::build_prototypes(support, {7, 3, 5});
  REQUIRE(protos.size() == 3);
  CHECK(protos.class_ids == std::vector<int>{3, 5, 7});
  CHECK((protos.prototypes[0].coords() - support[1].coords()).norm() < 1e-14);
  CHECK((protos.prototypes[1].coords() - support[2].coords()).norm() < 1e-14);
  CHECK((protos.prototypes[2].coords() - support[0].coords()).norm() < 1e-14);
}

TEST_CASE("antipodal support pairs average to the origin") {
  const BallPoint x = pt({0.4, -0.2, 0.3});
  const BallPoint nx(-x.coords(), kBase);
  const mining::PrototypeSet protos =
      mining::build_prototypes({x, nx, pt({0.1, 0.0, 0.0})}, {0, 0, 1});
  REQUIRE(protos.size() == 2);
  CHECK(protos.prototypes[0].coords().norm() < 1e-15);
}

TEST_CASE("prototypes are invariant to support permutation") {
  Rng rng(11);
  std::vector<BallPoint> support;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    support.push_back(random_point(rng, 5));
    labels.push_back(i % 3);
  }
  const mining::PrototypeSet base = mining::build_prototypes(support, labels);

  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), 0u);
  Rng shuffle_rng(17);
  for (int round = 0; round < 5; ++round) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.integer(i)]);
    }
    std::vector<BallPoint> perm_support;
    std::vector<int> perm_labels;
    for (std::size_t idx : order) {
      perm_support.push_back(support[idx]);
      perm_labels.push_back(labels[idx]);
    }
    const mining::PrototypeSet perm = mining::build_prototypes(perm_support, perm_labels);
    REQUIRE(perm.class_ids == base.class_ids);
    for (int p = 0; p < base.size(); ++p) {
      CHECK((perm.prototypes[p].coords() - base.prototypes[p].coords()).norm() <
            1e-12);
    }
  }
}

TEST_CASE("prototype construction input guards") {
  CHECK_THROWS_AS(mining::build_prototypes({}, {}), ValidationError);
  const BallPoint x = pt({0.1, 0.2});
  CHECK_THROWS_AS(mining::build_prototypes({x}, {0, 1}), ValidationError);
  const BallPoint other(x.coords(), CurvatureMag(1.0));
  CHECK_THROWS_AS(mining::build_prototypes({x, other}, {0, 0}), ValidationError);
}

TEST_CASE("threshold endpoints select everything or nothing") {
  Rng rng(23);
  std::vector<BallPoint> support;
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c)
    for (int s = 0; s < 3; ++s) {
      support.push_back(random_point(rng, 4));
      labels.push_back(c);
    }
  const mining::PrototypeSet protos = mining::build_prototypes(support, labels);
  std::vector<BallPoint> queries;
  for (int i = 0; i < 30; ++i) queries.push_back(random_point(rng, 4));

  const mining::HardSet all = mining::mine_hard(queries, protos, 0.0);
  CHECK(all.members.size() == queries.size());
  const mining::HardSet none = mining::mine_hard(queries, protos, 1.0);
  CHECK(none.members.empty());
}

TEST_CASE("hard sets shrink as the threshold grows") {
  Rng rng(29);
  std::vector<BallPoint> support;
  std::vector<int> labels;
  for (int c = 0; c < 5; ++c)
    for (int s = 0; s < 2; ++s) {
      support.push_back(random_point(rng, 6));
      labels.push_back(c);
    }
  const mining::PrototypeSet protos = mining::build_prototypes(support, labels);
  std::vector<BallPoint> queries;
  for (int i = 0; i < 60; ++i) queries.push_back(random_point(rng, 6));

  std::size_t prev_count = queries.size() + 1;
  std::vector<int> prev_members;
  bool first = true;
  for (double t : {0.0, 0.25, 0.5, 0.75, 0.9, 1.0}) {
    const mining::HardSet hs = mining::mine_hard(queries, protos, t);
    CHECK(hs.members.size() <= prev_count);
    if (!first) {
      CHECK(std::includes(prev_members.begin(), prev_members.end(),
                          hs.members.begin(), hs.members.end()));
    }
    for (double r : hs.ratios) {
      CHECK(r > 0.0);
      CHECK(r <= 1.0);
    }
    prev_count = hs.members.size();
    prev_members = hs.members;
    first = false;
  }
}

TEST_CASE("per-query records match the sort-based oracle") {
  Rng rng(31);
  std::vector<BallPoint> support;
  std::vector<int> labels;
  for (int c = 0; c < 6; ++c)
    for (int s = 0; s < 3; ++s) {
      support.push_back(random_point(rng, 5));
      labels.push_back(10 * c);
    }
  const mining::PrototypeSet protos = mining::build_prototypes(support, labels);
  std::vector<BallPoint> queries;
  for (int i = 0; i < 40; ++i) queries.push_back(random_point(rng, 5));

  const double threshold = 0.6;
  const auto records = mining::mine_records(queries, protos, threshold);
  REQUIRE(records.size() == queries.size());
  const mining::HardSet hs = mining::mine_hard(queries, protos, threshold);

  std::size_t seen = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const mining::MiningRecord expected =
        oracle_record(queries[q], protos, threshold, static_cast<int>(q));
    CHECK(records[q].query_index == expected.query_index);
    CHECK(records[q].d1 == expected.d1);
    CHECK(records[q].d2 == expected.d2);
    CHECK(records[q].ratio == expected.ratio);
    CHECK(records[q].selected == expected.selected);
    if (records[q].selected) {
      REQUIRE(seen < hs.members.size());
      CHECK(hs.members[seen] == static_cast<int>(q));
      CHECK(hs.ratios[seen] == records[q].ratio);
      ++seen;
    }
  }
  CHECK(seen == hs.members.size());
}

TEST_CASE("queries sitting on a prototype report ratio zero") {
  const BallPoint a = pt({0.5, 0.0});
  const BallPoint b = pt({-0.3, 0.4});
  const mining::PrototypeSet protos = mining::build_prototypes({a, b}, {0, 1});
  const auto records = mining::mine_records({a}, protos, 0.25);
  REQUIRE(records.size() == 1);
  CHECK(records[0].d1 == 0.0);
  CHECK(records[0].ratio == 0.0);
  CHECK_FALSE(records[0].selected);
}

TEST_CASE("equidistant prototypes give ratio one and break ties low") {
  const BallPoint a = pt({0.4, 0.0});
  const BallPoint na = pt({-0.4, 0.0});
  const mining::PrototypeSet protos = mining::build_prototypes({a, na}, {2, 1});
  const BallPoint origin = pt({0.0, 0.0});

  const auto records = mining::mine_records({origin}, protos, 0.5);
  REQUIRE(records.size() == 1);
  CHECK(records[0].d1 == records[0].d2);
  CHECK(records[0].ratio == 1.0);
  CHECK(records[0].selected);
  CHECK(mining::mine_hard({origin}, protos, 1.0).members.empty());
}

TEST_CASE("mining input guards") {
  const BallPoint a = pt({0.2, 0.1});
  mining::PrototypeSet single;
  single.prototypes = {a};
  single.class_ids = {0};
  CHECK_THROWS_WITH_AS(mining::mine_hard({a}, single, 0.5),
                       doctest::Contains("insufficient-prototypes"),
                       ValidationError);

  const mining::PrototypeSet protos =
      mining::build_prototypes({a, pt({-0.2, 0.3})}, {0, 1});
  CHECK_THROWS_AS(mining::mine_hard({a}, protos, -0.1), ValidationError);
  CHECK_THROWS_AS(mining::mine_hard({a}, protos, 1.5), ValidationError);
  const BallPoint wrong(a.coords(), CurvatureMag(2.0));
  CHECK_THROWS_AS(mining::mine_hard({wrong}, protos, 0.5), ValidationError);
}

TEST_CASE("mining is deterministic") {
  Rng rng(37);
  std::vector<BallPoint> support;
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int s = 0; s < 4; ++s) {
      support.push_back(random_point(rng, 4));
      labels.push_back(c);
    }
  const mining::PrototypeSet protos = mining::build_prototypes(support, labels);
  std::vector<BallPoint> queries;
  for (int i = 0; i < 25; ++i) queries.push_back(random_point(rng, 4));

  const mining::HardSet first = mining::mine_hard(queries, protos, 0.7);
  for (int i = 0; i < 5; ++i) {
    const mining::HardSet again = mining::mine_hard(queries, protos, 0.7);
    CHECK(again.members == first.members);
    CHECK(again.ratios == first.ratios);
  }
}
