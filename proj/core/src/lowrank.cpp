#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

#include "hypergeo/ghdm.hpp"
#include "hypergeo/rng.hpp"

namespace hypergeo::ghdm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxIterations = 200;
constexpr double kSigmaTol = 1e-13;

MatrixXd orthonormalize(const MatrixXd& m) {
  Eigen::HouseholderQR<MatrixXd> qr(m);
  return qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
}

/// Percentile by linear interpolation on the sorted sample.
double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ValidationError("percentile: empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

LowRankProjection ResidualDecomposition::truncate(int k, bool residual) const {
  if (k < 1 || k > sigma.size()) {
    throw ValidationError("truncate: rank outside the decomposed range");
  }
  LowRankProjection proj;
  proj.m_a = u.leftCols(k) * sigma.head(k).asDiagonal();
  proj.m_b = v.leftCols(k);
  proj.residual = residual;
  return proj;
}

ResidualDecomposition decompose_residual(const MatrixXd& m, int r,
                                         std::uint64_t seed) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw ValidationError("decompose_residual: matrix must be square");
  }
  if (!m.allFinite()) {
    throw ValidationError("decompose_residual: non-finite matrix");
  }
  const int n = static_cast<int>(m.rows());
  if (r < 1 || r > n) {
    throw ValidationError("decompose_residual: rank outside [1, n]");
  }
  const int block = std::min(n, r + 8);

  Rng rng(seed);
  MatrixXd q(n, block);
  for (int j = 0; j < block; ++j)
    for (int i = 0; i < n; ++i) q(i, j) = rng.normal();
  q = orthonormalize(q);

  VectorXd prev = VectorXd::Zero(r);
  MatrixXd qy;
  Eigen::JacobiSVD<MatrixXd> svd;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    qy = orthonormalize(m * q);
    q = orthonormalize(m.transpose() * qy);
    svd.compute(qy.transpose() * m * q,
                Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd current = svd.singularValues().head(r);
    const double scale = std::max(current[0], 1e-300);
    if (((current - prev).array().abs() / scale).maxCoeff() < kSigmaTol) break;
    prev = current;
  }

  ResidualDecomposition out;
  out.u = (qy * svd.matrixU()).leftCols(r);
  out.sigma = svd.singularValues().head(r);
  out.v = (q * svd.matrixV()).leftCols(r);
  return out;
}

std::vector<LowRankErrorRow> lowrank_error_experiment(
    int n, const std::vector<int>& k_values, int trials, std::uint64_t seed) {
  if (n < 1) throw ValidationError("lowrank experiment: dimension must be positive");
  if (trials < 1) throw ValidationError("lowrank experiment: trials must be positive");
  if (k_values.empty()) throw ValidationError("lowrank experiment: no ranks given");
  for (int k : k_values) {
    if (k < 1 || k > n) {
      throw ValidationError("lowrank experiment: rank outside [1, n]");
    }
  }
  constexpr int kPointsPerTrial = 4;
  const ball::CurvatureMag kappa(0.5);

  int max_partial = 0;
  for (int k : k_values) {
    if (k < n) max_partial = std::max(max_partial, k);
  }

  std::vector<std::vector<double>> errors(k_values.size());
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(trial)));
    MatrixXd residual(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) residual(i, j) = rng.normal();
    residual /= residual.norm();  // unit Frobenius norm

    std::vector<ball::BallPoint> points;
    points.reserve(kPointsPerTrial);
    for (int s = 0; s < kPointsPerTrial; ++s) {
      VectorXd dir(n);
      for (int i = 0; i < n; ++i) dir[i] = rng.normal();
      const double target = rng.uniform(0.1, 0.9) * kappa.ball_radius();
      points.emplace_back(dir * (target / dir.norm()), kappa);
    }

    LowRankProjection full;
    full.m_a = residual;
    full.m_b = MatrixXd::Identity(n, n);
    full.residual = true;
    std::vector<VectorXd> full_images;
    full_images.reserve(points.size());
    for (const ball::BallPoint& x : points) {
      full_images.push_back(
          ball::mobius_matvec_image(full.apply(x.coords()), x).coords());
    }

    ResidualDecomposition decomp;
    if (max_partial > 0) {
      decomp = decompose_residual(residual, max_partial,
                                  substream_seed(seed, 1000003ull + static_cast<std::uint64_t>(trial)));
    }

    for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
      const int k = k_values[ki];
      const LowRankProjection proj =
          k == n ? full : decomp.truncate(k, true);
      for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const ball::BallPoint& x = points[pi];
        const VectorXd image =
            ball::mobius_matvec_image(proj.apply(x.coords()), x).coords();
        errors[ki].push_back((image - full_images[pi]).norm());
      }
    }
  }

  std::vector<LowRankErrorRow> rows;
  rows.reserve(k_values.size());
  for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
    std::sort(errors[ki].begin(), errors[ki].end());
    LowRankErrorRow row;
    row.dim = n;
    row.rank = k_values[ki];
    row.median_err = percentile(errors[ki], 0.5);
    row.q25 = percentile(errors[ki], 0.25);
    row.q75 = percentile(errors[ki], 0.75);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace hypergeo::ghdm
