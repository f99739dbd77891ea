#include <benchmark/benchmark.h>

#include <vector>

#include "hypergeo/ball.hpp"
#include "hypergeo/ghdm.hpp"
#include "hypergeo/hyperbolicity.hpp"
#include "hypergeo/mining.hpp"
#include "hypergeo/rng.hpp"
#include "hypergeo/trainer.hpp"

using namespace hypergeo;

namespace {

ball::BallPoint random_point(Rng& rng, int dim, const ball::CurvatureMag& kappa) {
  Eigen::VectorXd v(dim);
  for (int d = 0; d < dim; ++d) v[d] = rng.normal();
  const double radius = rng.uniform(0.05, 0.85) * kappa.ball_radius();
  return ball::BallPoint(v * (radius / v.norm()), kappa);
}

std::vector<ball::BallPoint> random_points(int count, int dim, double kappa,
                                           std::uint64_t seed) {
  Rng rng(seed);
  const ball::CurvatureMag k(kappa);
  std::vector<ball::BallPoint> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pts.push_back(random_point(rng, dim, k));
  return pts;
}

void BM_GeodesicDistance(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto pts = random_points(64, dim, 0.5, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& a = pts[i % pts.size()];
    const auto& b = pts[(i + 7) % pts.size()];
    benchmark::DoNotOptimize(ball::geodesic_distance(a, b));
    ++i;
  }
}
BENCHMARK(BM_GeodesicDistance)->Arg(16)->Arg(64)->Arg(256);

void BM_EinsteinMidpoint(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  const auto pts = random_points(count, 64, 0.5, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ball::einstein_midpoint(pts));
  }
}
BENCHMARK(BM_EinsteinMidpoint)->Arg(5)->Arg(25)->Arg(100);

void BM_AdaptedDistance(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const int rank = static_cast<int>(state.range(1));
  ghdm::GhdmConfig config;
  config.dim = dim;
  config.rank = rank;
  const auto params = ghdm::GeneratorParams::random_init(config, 3);
  const auto pts = random_points(16, dim, config.base_kappa, 4);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& a = pts[i % pts.size()];
    const auto& b = pts[(i + 5) % pts.size()];
    benchmark::DoNotOptimize(ghdm::adapted_distance(params, a, b));
    ++i;
  }
}
BENCHMARK(BM_AdaptedDistance)
    ->Args({64, 4})
    ->Args({64, 16})
    ->Args({64, 64})
    ->Args({256, 16});

void BM_DeltaHyperbolicity(benchmark::State& state) {
  const int samples = static_cast<int>(state.range(0));
  const auto pts = random_points(256, 32, 0.5, 5);
  std::vector<Eigen::VectorXd> coords;
  coords.reserve(pts.size());
  for (const auto& p : pts) coords.push_back(p.coords());
  for (auto _ : state) {
    benchmark::DoNotOptimize(hyperbolicity::delta_rel_sampled(
        coords, hyperbolicity::PoincareMetric{ball::CurvatureMag(0.5)},
        samples, 4, 7));
  }
}
BENCHMARK(BM_DeltaHyperbolicity)->Arg(8)->Arg(16)->Arg(32);

void BM_MineRecords(benchmark::State& state) {
  const int queries = static_cast<int>(state.range(0));
  const auto support = random_points(25, 64, 0.5, 8);
  std::vector<int> labels;
  for (int i = 0; i < 25; ++i) labels.push_back(i / 5);
  const auto protos = mining::build_prototypes(support, labels);
  const auto query = random_points(queries, 64, 0.5, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mining::mine_records(query, protos, 0.96));
  }
}
BENCHMARK(BM_MineRecords)->Arg(25)->Arg(75)->Arg(300);

void BM_TrainStep(benchmark::State& state) {
  trainer::DatasetConfig dcfg;
  dcfg.depth = 3;
  dcfg.branching = 2;
  dcfg.dim = 32;
  dcfg.per_class = 12;
  const auto ds = trainer::generate_tree_dataset(dcfg);
  trainer::TrainConfig tcfg;
  tcfg.ways = 3;
  tcfg.shots = 3;
  tcfg.queries = 5;
  tcfg.rank = 8;
  tcfg.threshold = 0.5;  // keep the hard set busy so the tape is exercised
  tcfg.steps = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer::train(ds, tcfg));
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
