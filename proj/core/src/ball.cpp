#include "hypergeo/ball.hpp"

#include <cmath>
#include <string>

namespace hypergeo::ball {

namespace {

double clip_atanh_arg(double t, bool* saturated) {
  const double limit = 1.0 - kBoundaryEps;
  if (t >= limit) {
    if (saturated != nullptr) *saturated = true;
    return limit;
  }
  return t;
}

void require_same_kappa(const BallPoint& x, const BallPoint& y, const char* op) {
  if (x.kappa() != y.kappa()) {
    throw ValidationError(std::string(op) + ": curvature-mismatch between operands");
  }
  if (x.dim() != y.dim()) {
    throw ValidationError(std::string(op) + ": dimension mismatch");
  }
}

/// Raw Mobius sum without the projection guard; shared by mobius_add (which
/// projects) and geodesic_distance (which clips the scalar arctanh argument
/// instead, so saturation is observable).
Vec mobius_add_raw(const Vec& x, const Vec& y, double kappa, const char* op) {
  const double dot = x.dot(y);
  const double nx2 = x.squaredNorm();
  const double ny2 = y.squaredNorm();
  const double cx = 1.0 + 2.0 * kappa * dot + kappa * ny2;
  const double cy = 1.0 - kappa * nx2;
  const double den = 1.0 + 2.0 * kappa * dot + kappa * kappa * nx2 * ny2;
  if (std::abs(den) < kDenomEps) {
    throw ValidationError(std::string(op) + ": degenerate-input, denominator below guard");
  }
  return (cx * x + cy * y) / den;
}

}  // namespace

CurvatureMag::CurvatureMag(double kappa) : kappa_(kappa), sqrt_kappa_(std::sqrt(kappa)) {
  if (!std::isfinite(kappa) || kappa <= 0.0) {
    throw ValidationError("CurvatureMag: kappa must be positive and finite");
  }
}

BallPoint::BallPoint(Vec coords, CurvatureMag kappa)
    : coords_(std::move(coords)), kappa_(kappa) {
  if (!coords_.allFinite()) {
    throw ValidationError("BallPoint: invalid-input, non-finite coordinates");
  }
  if (kappa_.value() * coords_.squaredNorm() >= 1.0) {
    throw ValidationError("BallPoint: point lies on or outside the ball of radius 1/sqrt(kappa)");
  }
}

TangentVector::TangentVector(Vec coords, BallPoint base)
    : coords_(std::move(coords)), base_(std::move(base)) {
  if (!coords_.allFinite()) {
    throw ValidationError("TangentVector: invalid-input, non-finite coordinates");
  }
  if (coords_.size() != base_.dim()) {
    throw ValidationError("TangentVector: dimension mismatch with base point");
  }
}

double conformal_factor(const BallPoint& x) {
  return 2.0 / (1.0 - x.kappa().value() * x.coords().squaredNorm());
}

BallPoint project_to_ball(const Vec& coords, const CurvatureMag& kappa) {
  if (!coords.allFinite()) {
    throw ValidationError("project_to_ball: invalid-input, non-finite coordinates");
  }
  const double limit = 1.0 - kBoundaryEps;
  const double scaled_sq = kappa.value() * coords.squaredNorm();
  if (scaled_sq >= limit * limit) {
    const double norm = coords.norm();
    const double target = limit / kappa.sqrt_value();
    return BallPoint(coords * (target / norm), kappa);
  }
  return BallPoint(coords, kappa);
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  require_same_kappa(x, y, "mobius_add");
  const Vec raw = mobius_add_raw(x.coords(), y.coords(), x.kappa().value(), "mobius_add");
  return project_to_ball(raw, x.kappa());
}

BallPoint negate(const BallPoint& x) { return BallPoint(-x.coords(), x.kappa()); }

double geodesic_distance(const BallPoint& x, const BallPoint& y, bool* saturated) {
  require_same_kappa(x, y, "geodesic_distance");
  if (saturated != nullptr) *saturated = false;
  if (x.coords() == y.coords()) return 0.0;  // exact identity of indiscernibles
  const double kappa = x.kappa().value();
  const Vec diff = mobius_add_raw(-x.coords(), y.coords(), kappa, "geodesic_distance");
  const double t = clip_atanh_arg(x.kappa().sqrt_value() * diff.norm(), saturated);
  return 2.0 / x.kappa().sqrt_value() * std::atanh(t);
}

BallPoint mobius_matvec(const Mat& m, const BallPoint& x) {
  if (!m.allFinite()) {
    throw ValidationError("mobius_matvec: invalid-input, non-finite matrix");
  }
  if (m.cols() != x.dim()) {
    throw ValidationError("mobius_matvec: matrix/point dimension mismatch");
  }
  if (x.coords().norm() == 0.0) {
    return BallPoint(Vec::Zero(m.rows()), x.kappa());  // convention branch
  }
  return mobius_matvec_image(m * x.coords(), x);
}

BallPoint mobius_matvec_image(const Vec& mx, const BallPoint& x) {
  if (!mx.allFinite()) {
    throw ValidationError("mobius_matvec_image: invalid-input, non-finite image");
  }
  const double sqrt_kappa = x.kappa().sqrt_value();
  const double norm_x = x.coords().norm();
  if (norm_x == 0.0 || mx.norm() == 0.0) {
    return BallPoint(Vec::Zero(mx.size()), x.kappa());  // convention branch
  }
  const double norm_mx = mx.norm();
  const double arg = clip_atanh_arg(sqrt_kappa * norm_x, nullptr);
  const double scale = std::tanh(norm_mx / norm_x * std::atanh(arg)) / (sqrt_kappa * norm_mx);
  return project_to_ball(scale * mx, x.kappa());
}

BallPoint exp_map(const BallPoint& x, const TangentVector& v) {
  if (x.kappa() != v.base().kappa() || x.coords() != v.base().coords()) {
    throw ValidationError("exp_map: tangent vector is not based at x");
  }
  const double norm_v = v.coords().norm();
  if (norm_v == 0.0) return x;
  const double sqrt_kappa = x.kappa().sqrt_value();
  const double lambda = conformal_factor(x);
  const double scale = std::tanh(sqrt_kappa * lambda * norm_v / 2.0) / (sqrt_kappa * norm_v);
  const BallPoint step(scale * v.coords(), x.kappa());  // tanh < 1 keeps it inside
  return mobius_add(x, step);
}

BallPoint exp_map(const TangentVector& v) { return exp_map(v.base(), v); }

TangentVector log_map(const BallPoint& x, const BallPoint& y) {
  require_same_kappa(x, y, "log_map");
  if (x.coords() == y.coords()) return TangentVector(Vec::Zero(x.dim()), x);
  const double kappa = x.kappa().value();
  const double sqrt_kappa = x.kappa().sqrt_value();
  const Vec diff = mobius_add_raw(-x.coords(), y.coords(), kappa, "log_map");
  const double norm_diff = diff.norm();
  if (norm_diff == 0.0) {
    return TangentVector(Vec::Zero(x.dim()), x);
  }
  const double lambda = conformal_factor(x);
  const double arg = clip_atanh_arg(sqrt_kappa * norm_diff, nullptr);
  const double scale = 2.0 / (sqrt_kappa * lambda) * std::atanh(arg) / norm_diff;
  return TangentVector(scale * diff, x);
}

BallPoint einstein_midpoint(const std::vector<BallPoint>& points) {
  if (points.empty()) {
    throw ValidationError("einstein_midpoint: empty-input");
  }
  if (points.size() == 1) return points.front();  // exact for one-shot classes
  const CurvatureMag kappa = points.front().kappa();
  const Eigen::Index dim = points.front().dim();
  for (const BallPoint& p : points) {
    if (p.kappa() != kappa || p.dim() != dim) {
      throw ValidationError("einstein_midpoint: curvature-mismatch across points");
    }
  }
  const double k = kappa.value();
  Vec weighted = Vec::Zero(dim);
  double total = 0.0;
  for (const BallPoint& p : points) {
    const double r2 = k * p.coords().squaredNorm();
    const Vec klein = 2.0 * p.coords() / (1.0 + r2);
    // Lorentz factor in Klein coordinates; closed form of 1/sqrt(1 - k*|u|^2).
    const double gamma = (1.0 + r2) / (1.0 - r2);
    weighted += gamma * klein;
    total += gamma;
  }
  const Vec mean = weighted / total;
  const double mean_r2 = k * mean.squaredNorm();
  const Vec back = mean / (1.0 + std::sqrt(std::max(1.0 - mean_r2, 0.0)));
  return project_to_ball(back, kappa);
}

}  // namespace hypergeo::ball
