#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "hypergeo/ball.hpp"
#include "hypergeo/params.hpp"
#include "hypergeo/tensor.hpp"

namespace hypergeo::ghdm {

/// Margin of the validity rescale that moves points into the ball of a
/// generated curvature: norms are capped at (1 - kProjectionMargin) times the
/// ball radius. Wider than the generic boundary epsilon on purpose. With cap
/// r = 0.99 the gyro-difference of any two rescaled points has norm at most
/// 2r/(1 + r^2) < 1 - 1e-5, so the distance arctanh never saturates its clamp
/// and its gradient never hits the clamp's dead zone.
inline constexpr double kProjectionMargin = 1e-2;

/// Sizes and ranges for the two generators and the adapted distance.
struct GhdmConfig {
  int dim = 64;        // feature dimension n
  int rank = 16;       // projection rank k
  int hidden = 0;      // generator hidden width h; 0 selects 4*dim
  double c_min = 1e-4;
  double c_max = 3.0;
  double base_kappa = 0.5;
  bool residual_enabled = true;

  int hidden_width() const { return hidden > 0 ? hidden : 4 * dim; }
  void validate() const;
};

/// Factored projection. The effective matrix M = I + m_a*m_b^T (or m_a*m_b^T
/// with the residual path off) is never materialized; apply() runs in O(nk).
struct LowRankProjection {
  Eigen::MatrixXd m_a;  // n x k
  Eigen::MatrixXd m_b;  // n x k
  bool residual = true;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

/// Gate output of the curvature generator before and after range rescaling.
struct PairCurvature {
  double sigma;  // sigmoid output, strictly inside (0, 1)
  double c;      // c_min + (c_max - c_min) * sigma
};

/// The trainable state: two projection nets f_a, f_b (2n -> h -> n*k) and two
/// linear curvature nets f_1, f_2 (n -> n), all kept in one named store.
class GeneratorParams {
 public:
  explicit GeneratorParams(GhdmConfig config);  // all weights zero
  static GeneratorParams random_init(GhdmConfig config, std::uint64_t seed);

  const GhdmConfig& config() const noexcept { return config_; }
  diff::ParamStore& store() noexcept { return store_; }
  const diff::ParamStore& store() const noexcept { return store_; }

  /// Zeroes the output layers of f_a and f_b so the projection collapses to
  /// the identity (residual on) or to zero (residual off).
  void zero_residual_output();

 private:
  GhdmConfig config_;
  diff::ParamStore store_;
};

/// Tangent coordinates of x at the origin of its ball; the generators' input.
Eigen::VectorXd origin_features(const ball::BallPoint& x);

LowRankProjection generate_projection(const GeneratorParams& params,
                                      const Eigen::VectorXd& zi,
                                      const Eigen::VectorXd& zj);

PairCurvature generate_curvature(const GeneratorParams& params,
                                 const Eigen::VectorXd& zi,
                                 const Eigen::VectorXd& zj);

/// d_{M,c}(x_i, x_j): both points are rescaled into the ball of the generated
/// curvature, pushed through the generated projection, and measured with the
/// geodesic distance at that curvature.
double adapted_distance(const GeneratorParams& params, const ball::BallPoint& xi,
                        const ball::BallPoint& xj);

// ---- differentiable path ----

/// Tape handles for every generator parameter, bound without copying.
struct BoundParams {
  diff::Tensor f_a_w1, f_a_b1, f_a_w2, f_a_b2;
  diff::Tensor f_b_w1, f_b_b1, f_b_w2, f_b_b2;
  diff::Tensor f_1_w, f_1_b, f_2_w, f_2_b;
};

BoundParams bind_generators(diff::Tape& tape, const GeneratorParams& params);

/// Generator outputs for a batch of feature pairs (one pair per row).
struct GeneratorBatch {
  diff::Tensor a_res;  // B x (n*k), row r flattens m_a of pair r
  diff::Tensor b_res;  // B x (n*k)
  diff::Tensor c;      // B x 1, rescaled curvatures
  int rows = 0;
};

/// feat_i, feat_j: B x n matrices of origin features, one pair per row.
GeneratorBatch run_generators(diff::Tape& tape, const BoundParams& bound,
                              const GhdmConfig& config,
                              const Eigen::MatrixXd& feat_i,
                              const Eigen::MatrixXd& feat_j);

/// Distance node for one row of a generator batch. xi, xj are base-ball
/// points; their coordinates enter the tape as constants.
diff::Tensor adapted_distance_node(diff::Tape& tape, const GeneratorBatch& batch,
                                   const GhdmConfig& config, int row,
                                   const ball::BallPoint& xi,
                                   const ball::BallPoint& xj);

/// Adds the tape gradients of every bound tensor into the parameter store.
void accumulate_generator_grads(const BoundParams& bound, GeneratorParams& params);

struct GradCheckReport {
  double max_rel_err = 0.0;
  int probes = 0;
};

/// Compares tape gradients of the adapted distance against central finite
/// differences on randomly probed parameter coordinates.
GradCheckReport gradcheck_adapted_distance(const GhdmConfig& config,
                                           std::uint64_t seed,
                                           int probes_per_param = 5,
                                           double step = 1e-5);

// ---- rank sweep experiment ----

/// Singular triplets of a residual matrix, ordered by decreasing value, from
/// which nested rank-k truncations are cut.
struct ResidualDecomposition {
  Eigen::MatrixXd u;       // n x r
  Eigen::VectorXd sigma;   // r
  Eigen::MatrixXd v;       // n x r

  /// m_a = U_k diag(sigma_k), m_b = V_k; requires k <= r.
  LowRankProjection truncate(int k, bool residual = true) const;
};

/// Top-r singular triplets by blocked subspace iteration (seeded start block).
ResidualDecomposition decompose_residual(const Eigen::MatrixXd& m, int r,
                                         std::uint64_t seed);

struct LowRankErrorRow {
  int dim = 0;
  int rank = 0;
  double median_err = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// For `trials` random unit-Frobenius residuals, truncates each to every rank
/// in k_values with a subspace-iteration decomposition and records the
/// displacement of hyperbolic matvec images over random ball points.
std::vector<LowRankErrorRow> lowrank_error_experiment(int n,
                                                      const std::vector<int>& k_values,
                                                      int trials, std::uint64_t seed);

}  // namespace hypergeo::ghdm
