#include "hypergeo/hyperbolicity.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "hypergeo/rng.hpp"

namespace hypergeo::hyperbolicity {

namespace {

constexpr double kSymTol = 1e-12;

Mat subsample_distances(const std::vector<Eigen::VectorXd>& points,
                        const std::vector<int>& idx, EuclideanMetric) {
  const int m = static_cast<int>(idx.size());
  Mat d = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double v = (points[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] -
                        points[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])])
                           .norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Mat subsample_distances(const std::vector<Eigen::VectorXd>& points,
                        const std::vector<int>& idx, PoincareMetric metric) {
  const int m = static_cast<int>(idx.size());
  std::vector<ball::BallPoint> pts;
  pts.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    pts.push_back(ball::project_to_ball(
        points[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])], metric.kappa));
  }
  Mat d = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double v = ball::geodesic_distance(pts[static_cast<std::size_t>(i)],
                                               pts[static_cast<std::size_t>(j)]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

template <typename Metric>
HyperbolicityReport sampled_impl(const std::vector<Eigen::VectorXd>& points,
                                 Metric metric, int sample_size, int trials,
                                 std::uint64_t seed, int threads) {
  if (points.empty()) throw ValidationError("delta_rel_sampled: empty-input");
  if (sample_size < 3) {
    throw ValidationError("delta_rel_sampled: insufficient-points, sample_size must be >= 3");
  }
  if (static_cast<std::size_t>(sample_size) > points.size()) {
    throw ValidationError("delta_rel_sampled: sample_size exceeds the number of points");
  }
  if (trials < 1) throw ValidationError("delta_rel_sampled: trials must be >= 1");

  std::vector<double> rel(static_cast<std::size_t>(trials));
  std::vector<double> dia(static_cast<std::size_t>(trials));
  auto run_trial = [&](int t) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(t)));
    const std::vector<int> idx =
        rng.sample_without_replacement(static_cast<int>(points.size()), sample_size);
    const DistanceMatrix d(subsample_distances(points, idx, metric));
    HyperbolicityReport r = delta_hyperbolicity(d);
    rel[static_cast<std::size_t>(t)] = r.delta_rel;
    dia[static_cast<std::size_t>(t)] = r.diam;
  };

  // Trials are independent; the reduction below is by trial index, so the
  // result is identical for any thread count.
  const int workers = std::max(1, std::min(threads, trials));
  if (workers == 1) {
    for (int t = 0; t < trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int t = w; t < trials; t += workers) run_trial(t);
      });
    }
    for (std::thread& th : pool) th.join();
  }

  double rel_sum = 0.0;
  double dia_sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    rel_sum += rel[static_cast<std::size_t>(t)];
    dia_sum += dia[static_cast<std::size_t>(t)];
  }
  HyperbolicityReport out;
  out.delta_rel = rel_sum / trials;
  out.diam = dia_sum / trials;
  out.delta = out.delta_rel * out.diam / 2.0;
  out.num_samples = sample_size;
  out.num_trials = trials;
  return out;
}

}  // namespace

DistanceMatrix::DistanceMatrix(Mat d) : d_(std::move(d)) {
  if (d_.rows() != d_.cols()) {
    throw ValidationError("DistanceMatrix: matrix must be square");
  }
  if (!d_.allFinite()) {
    throw ValidationError("DistanceMatrix: invalid-input, non-finite entries");
  }
  for (Eigen::Index i = 0; i < d_.rows(); ++i) {
    if (d_(i, i) != 0.0) {
      throw ValidationError("DistanceMatrix: diagonal must be zero");
    }
    for (Eigen::Index j = i + 1; j < d_.cols(); ++j) {
      if (d_(i, j) < 0.0) {
        throw ValidationError("DistanceMatrix: entries must be nonnegative");
      }
      if (std::abs(d_(i, j) - d_(j, i)) > kSymTol * std::max(1.0, std::abs(d_(i, j)))) {
        throw ValidationError("DistanceMatrix: matrix must be symmetric");
      }
    }
  }
}

GromovMatrix gromov_products(const DistanceMatrix& d, Eigen::Index base) {
  const Eigen::Index m = d.size();
  if (base < 0 || base >= m) {
    throw ValidationError("gromov_products: base index out of range");
  }
  const Mat& dd = d.values();
  GromovMatrix g{Mat(m, m), base};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      g.a(i, j) = 0.5 * (dd(base, i) + dd(base, j) - dd(i, j));
    }
  }
  return g;
}

HyperbolicityReport delta_hyperbolicity(const DistanceMatrix& d) {
  const Eigen::Index m = d.size();
  if (m < 3) {
    throw ValidationError("delta_hyperbolicity: insufficient-points, need at least 3");
  }
  const GromovMatrix g = gromov_products(d, 0);
  const Mat& a = g.a;

  double delta = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < m; ++k) {
        best = std::max(best, std::min(a(i, k), a(k, j)));
      }
      delta = std::max(delta, best - a(i, j));
    }
  }

  const double diam = d.values().maxCoeff();
  if (diam <= 0.0) {
    throw ValidationError("delta_hyperbolicity: degenerate-input, all points coincide");
  }
  HyperbolicityReport out;
  out.delta = delta;
  out.diam = diam;
  out.delta_rel = 2.0 * delta / diam;
  out.num_samples = static_cast<int>(m);
  out.num_trials = 1;
  return out;
}

HyperbolicityReport delta_rel_sampled(const std::vector<Eigen::VectorXd>& points,
                                      EuclideanMetric metric, int sample_size,
                                      int trials, std::uint64_t seed, int threads) {
  return sampled_impl(points, metric, sample_size, trials, seed, threads);
}

HyperbolicityReport delta_rel_sampled(const std::vector<Eigen::VectorXd>& points,
                                      PoincareMetric metric, int sample_size,
                                      int trials, std::uint64_t seed, int threads) {
  return sampled_impl(points, metric, sample_size, trials, seed, threads);
}

}  // namespace hypergeo::hyperbolicity
