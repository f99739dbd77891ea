#pragma once

#include <Eigen/Core>
#include <vector>

#include "hypergeo/errors.hpp"

namespace hypergeo::ball {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Points are kept at Euclidean norm <= (1 - kBoundaryEps)/sqrt(kappa) after
/// every operation so that arctanh stays finite.
inline constexpr double kBoundaryEps = 1e-5;

/// Added to norm denominators to avoid 0/0 at the origin without altering
/// values at scale.
inline constexpr double kDenomEps = 1e-15;

/// Positive curvature magnitude kappa = |c|. All formulas in this module are
/// written against the magnitude with signs spelled out, so the one symbol
/// covers both sign conventions the literature uses.
class CurvatureMag {
 public:
  explicit CurvatureMag(double kappa);

  double value() const noexcept { return kappa_; }
  double sqrt_value() const noexcept { return sqrt_kappa_; }
  /// Radius of the open ball this curvature defines.
  double ball_radius() const noexcept { return 1.0 / sqrt_kappa_; }

  friend bool operator==(const CurvatureMag& a, const CurvatureMag& b) {
    return a.kappa_ == b.kappa_;
  }
  friend bool operator!=(const CurvatureMag& a, const CurvatureMag& b) {
    return !(a == b);
  }

 private:
  double kappa_;
  double sqrt_kappa_;
};

/// A point strictly inside the Poincare ball of radius 1/sqrt(kappa).
class BallPoint {
 public:
  /// Validates finiteness and strict ball membership (kappa*|x|^2 < 1).
  BallPoint(Vec coords, CurvatureMag kappa);

  const Vec& coords() const noexcept { return coords_; }
  const CurvatureMag& kappa() const noexcept { return kappa_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }

 private:
  Vec coords_;
  CurvatureMag kappa_;
};

/// Tangent vector anchored at a ball point. Coordinates carry no norm
/// restriction; only finiteness is required.
class TangentVector {
 public:
  TangentVector(Vec coords, BallPoint base);

  const Vec& coords() const noexcept { return coords_; }
  const BallPoint& base() const noexcept { return base_; }

 private:
  Vec coords_;
  BallPoint base_;
};

/// lambda_x = 2 / (1 - kappa*|x|^2), always >= 2 for valid points.
double conformal_factor(const BallPoint& x);

/// Clamps coords into the closed guard ball of radius (1-kBoundaryEps)/sqrt(kappa).
/// Interior points pass through unchanged; non-finite input is rejected.
BallPoint project_to_ball(const Vec& coords, const CurvatureMag& kappa);

/// Gyrogroup addition on the ball. Throws on curvature mismatch and on a
/// denominator collapsing below kDenomEps.
BallPoint mobius_add(const BallPoint& x, const BallPoint& y);

/// The gyro-inverse -x (same ball).
BallPoint negate(const BallPoint& x);

/// Geodesic distance (2/sqrt(kappa)) * arctanh(sqrt(kappa)*|(-x) + y|).
/// The arctanh argument is clipped to 1 - kBoundaryEps; when the clip fires,
/// *saturated is set (if provided).
double geodesic_distance(const BallPoint& x, const BallPoint& y,
                         bool* saturated = nullptr);

/// Matrix action on ball points: rescales |Mx| through tanh/arctanh so the
/// result stays inside the ball. x = 0 and Mx = 0 return the origin by
/// convention (continuous limit), not as errors.
BallPoint mobius_matvec(const Mat& m, const BallPoint& x);

/// Same action when the Euclidean image Mx is already available (e.g. from a
/// factored product); keeps callers off the O(n^2) materialized matrix.
BallPoint mobius_matvec_image(const Vec& mx, const BallPoint& x);

/// Tangent-space vector v at x mapped onto the ball. exp_x(0) = x exactly.
BallPoint exp_map(const BallPoint& x, const TangentVector& v);
BallPoint exp_map(const TangentVector& v);

/// Inverse of exp_map: log_x(x) is the zero tangent vector.
TangentVector log_map(const BallPoint& x, const BallPoint& y);

/// Hyperbolic mean: Klein map, Lorentz-weighted average, map back.
/// Lorentz factors are computed in Klein coordinates.
BallPoint einstein_midpoint(const std::vector<BallPoint>& points);

}  // namespace hypergeo::ball
