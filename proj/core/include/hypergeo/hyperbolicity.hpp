#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "hypergeo/ball.hpp"
#include "hypergeo/errors.hpp"

namespace hypergeo::hyperbolicity {

using Mat = Eigen::MatrixXd;

/// Symmetric, nonnegative, zero-diagonal pairwise distances.
class DistanceMatrix {
 public:
  /// Validates symmetry, zero diagonal, nonnegativity, finiteness.
  explicit DistanceMatrix(Mat d);

  const Mat& values() const noexcept { return d_; }
  Eigen::Index size() const noexcept { return d_.rows(); }

 private:
  Mat d_;
};

/// Gromov products a[i][j] = (x_i, x_j) taken at a fixed base point.
struct GromovMatrix {
  Mat a;
  Eigen::Index base;
};

struct HyperbolicityReport {
  double delta = 0.0;
  double diam = 0.0;
  double delta_rel = 0.0;  // 2*delta/diam, in [0, 1] for metric inputs
  int num_samples = 0;
  int num_trials = 0;
};

/// a[i][j] = (d[base][i] + d[base][j] - d[i][j]) / 2.
GromovMatrix gromov_products(const DistanceMatrix& d, Eigen::Index base);

/// Worst-case max-min defect of the Gromov product matrix at base point 0,
/// computed by the explicit O(m^3) max-min matrix product. Requires m >= 3.
HyperbolicityReport delta_hyperbolicity(const DistanceMatrix& d);

struct EuclideanMetric {};
struct PoincareMetric {
  ball::CurvatureMag kappa;
};

/// Subsampled delta_rel: `trials` seeded subsamples of `sample_size` points,
/// delta_rel averaged across trials (diam per subsample). The report's diam is
/// the per-trial mean and delta is derived as delta_rel*diam/2 so the report
/// invariant holds for the aggregate as well.
HyperbolicityReport delta_rel_sampled(const std::vector<Eigen::VectorXd>& points,
                                      EuclideanMetric metric, int sample_size,
                                      int trials, std::uint64_t seed,
                                      int threads = 1);
HyperbolicityReport delta_rel_sampled(const std::vector<Eigen::VectorXd>& points,
                                      PoincareMetric metric, int sample_size,
                                      int trials, std::uint64_t seed,
                                      int threads = 1);

}  // namespace hypergeo::hyperbolicity
