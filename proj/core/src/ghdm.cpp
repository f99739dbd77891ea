#include "hypergeo/ghdm.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hypergeo/rng.hpp"

namespace hypergeo::ghdm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

constexpr double kGateClip = 30.0;  // sigmoid pre-activation bound

double stable_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<double> flatten_row_major(const MatrixXd& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.rows()) *
                           static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return flat;
}

RowMajorMap weight_matrix(const diff::Param& p) {
  return RowMajorMap(p.value.data(), p.shape[0], p.shape[1]);
}

Eigen::Map<const VectorXd> bias_vector(const diff::Param& p) {
  return Eigen::Map<const VectorXd>(p.value.data(), p.shape[0]);
}

void check_feature(const VectorXd& z, int dim, const char* who) {
  if (z.size() != dim) {
    throw ValidationError(std::string(who) + ": feature dimension mismatch");
  }
  if (!z.allFinite()) {
    throw ValidationError(std::string(who) + ": non-finite feature");
  }
}

void check_base_point(const ball::BallPoint& x, const GhdmConfig& cfg,
                      const char* who) {
  if (x.dim() != cfg.dim) {
    throw ValidationError(std::string(who) + ": point dimension mismatch");
  }
  if (x.kappa().value() != cfg.base_kappa) {
    throw ValidationError(std::string(who) + ": curvature-mismatch, expected base ball");
  }
}

/// Shared rescale into the c-ball: factor min(1, capped_radius/|x|), written
/// in the same form the tape uses so both paths round identically.
double into_ball_scale(double norm, double sqrt_c) {
  const double s =
      (1.0 - kProjectionMargin) / (sqrt_c * norm + ball::kDenomEps);
  return s < 1.0 ? s : 1.0;
}

}  // namespace

void GhdmConfig::validate() const {
  if (dim < 1) throw ValidationError("config: dim must be positive");
  if (rank < 1 || rank > dim) throw ValidationError("config: rank must lie in [1, dim]");
  if (hidden < 0) throw ValidationError("config: hidden must be non-negative");
  if (!(c_min > 0.0) || !(c_max > c_min) || !std::isfinite(c_max)) {
    throw ValidationError("config: need 0 < c_min < c_max < inf");
  }
  if (!(base_kappa > 0.0) || !std::isfinite(base_kappa)) {
    throw ValidationError("config: base curvature must be positive and finite");
  }
}

VectorXd LowRankProjection::apply(const VectorXd& x) const {
  if (x.size() != m_a.rows()) {
    throw ValidationError("projection: point dimension mismatch");
  }
  const VectorXd factored = m_a * (m_b.transpose() * x);
  return residual ? (x + factored).eval() : factored;
}

GeneratorParams::GeneratorParams(GhdmConfig config) : config_(std::move(config)) {
  config_.validate();
  const int n = config_.dim;
  const int k = config_.rank;
  const int h = config_.hidden_width();
  auto zeros = [](int rows, int cols) {
    return std::vector<double>(static_cast<std::size_t>(rows) *
                                   static_cast<std::size_t>(cols),
                               0.0);
  };
  store_.add("f_a_w1", {h, 2 * n}, zeros(h, 2 * n));
  store_.add("f_a_b1", {h}, zeros(h, 1));
  store_.add("f_a_w2", {n * k, h}, zeros(n * k, h));
  store_.add("f_a_b2", {n * k}, zeros(n * k, 1));
  store_.add("f_b_w1", {h, 2 * n}, zeros(h, 2 * n));
  store_.add("f_b_b1", {h}, zeros(h, 1));
  store_.add("f_b_w2", {n * k, h}, zeros(n * k, h));
  store_.add("f_b_b2", {n * k}, zeros(n * k, 1));
  store_.add("f_1_w", {n, n}, zeros(n, n));
  store_.add("f_1_b", {n}, zeros(n, 1));
  store_.add("f_2_w", {n, n}, zeros(n, n));
  store_.add("f_2_b", {n}, zeros(n, 1));
}

GeneratorParams GeneratorParams::random_init(GhdmConfig config, std::uint64_t seed) {
  GeneratorParams params(std::move(config));
  const GhdmConfig& cfg = params.config_;
  const int n = cfg.dim;
  const int h = cfg.hidden_width();
  Rng rng(seed);
  auto fill = [&rng](diff::Param& p, double scale) {
    for (double& v : p.value) v = scale * rng.normal();
  };
  for (diff::Param& p : params.store_) {
    if (p.name == "f_a_w1" || p.name == "f_b_w1") {
      fill(p, 1.0 / std::sqrt(2.0 * n));
    } else if (p.name == "f_a_w2" || p.name == "f_b_w2") {
      fill(p, 1e-2 / std::sqrt(static_cast<double>(h)));
    } else if (p.name == "f_a_b2" || p.name == "f_b_b2") {
      fill(p, 1e-3);
    } else if (p.name == "f_1_w" || p.name == "f_2_w") {
      fill(p, 0.5 / std::sqrt(static_cast<double>(n)));
    } else if (p.name == "f_1_b" || p.name == "f_2_b") {
      fill(p, 0.1);
    }
    // hidden biases f_a_b1, f_b_b1 start at zero
  }
  return params;
}

void GeneratorParams::zero_residual_output() {
  for (const char* name : {"f_a_w2", "f_a_b2", "f_b_w2", "f_b_b2"}) {
    diff::Param& p = store_.get(name);
    std::fill(p.value.begin(), p.value.end(), 0.0);
  }
}

VectorXd origin_features(const ball::BallPoint& x) {
  const ball::BallPoint origin(VectorXd::Zero(x.dim()), x.kappa());
  return ball::log_map(origin, x).coords();
}

LowRankProjection generate_projection(const GeneratorParams& params,
                                      const VectorXd& zi, const VectorXd& zj) {
  const GhdmConfig& cfg = params.config();
  const int n = cfg.dim;
  const int k = cfg.rank;
  check_feature(zi, n, "generate_projection");
  check_feature(zj, n, "generate_projection");

  VectorXd z(2 * n);
  z << zi, zj;
  const diff::ParamStore& store = params.store();
  auto run_net = [&](const char* prefix) {
    const std::string p(prefix);
    const VectorXd hidden =
        ((weight_matrix(store.get(p + "_w1")) * z + bias_vector(store.get(p + "_b1")))
             .array()
             .tanh())
            .matrix();
    const VectorXd out = weight_matrix(store.get(p + "_w2")) * hidden +
                         bias_vector(store.get(p + "_b2"));
    return MatrixXd(RowMajorMap(out.data(), n, k));
  };
  LowRankProjection proj;
  proj.m_a = run_net("f_a");
  proj.m_b = run_net("f_b");
  proj.residual = cfg.residual_enabled;
  return proj;
}

PairCurvature generate_curvature(const GeneratorParams& params, const VectorXd& zi,
                                 const VectorXd& zj) {
  const GhdmConfig& cfg = params.config();
  check_feature(zi, cfg.dim, "generate_curvature");
  check_feature(zj, cfg.dim, "generate_curvature");

  const diff::ParamStore& store = params.store();
  const VectorXd f1 =
      weight_matrix(store.get("f_1_w")) * zi + bias_vector(store.get("f_1_b"));
  const VectorXd f2 =
      weight_matrix(store.get("f_2_w")) * zj + bias_vector(store.get("f_2_b"));
  const double gate = std::clamp(f1.dot(f2), -kGateClip, kGateClip);
  PairCurvature pc;
  pc.sigma = stable_sigmoid(gate);
  pc.c = cfg.c_min + (cfg.c_max - cfg.c_min) * pc.sigma;
  return pc;
}

double adapted_distance(const GeneratorParams& params, const ball::BallPoint& xi,
                        const ball::BallPoint& xj) {
  const GhdmConfig& cfg = params.config();
  check_base_point(xi, cfg, "adapted_distance");
  check_base_point(xj, cfg, "adapted_distance");

  const VectorXd zi = origin_features(xi);
  const VectorXd zj = origin_features(xj);
  const LowRankProjection proj = generate_projection(params, zi, zj);
  const PairCurvature pc = generate_curvature(params, zi, zj);
  const ball::CurvatureMag c(pc.c);
  const double sc = c.sqrt_value();
  const double lim = 1.0 - ball::kBoundaryEps;

  // Expression-for-expression the same arithmetic as adapted_distance_node so
  // the two paths agree to rounding error.
  auto push = [&](const ball::BallPoint& x) {
    const VectorXd xc = into_ball_scale(x.coords().norm(), sc) * x.coords();
    const VectorXd mx = proj.apply(xc);
    const double nx = xc.norm();
    const double nmx = mx.norm();
    const double at = std::atanh(std::clamp(sc * nx, -lim, lim));
    const double radial = std::tanh(nmx / (nx + ball::kDenomEps) * at) /
                          (sc * nmx + ball::kDenomEps);
    const VectorXd y = radial * mx;
    return ball::BallPoint(into_ball_scale(y.norm(), sc) * y, c);
  };
  return ball::geodesic_distance(push(xi), push(xj));
}

BoundParams bind_generators(diff::Tape& tape, const GeneratorParams& params) {
  const diff::ParamStore& s = params.store();
  BoundParams b;
  b.f_a_w1 = diff::bind_param(tape, s.get("f_a_w1"));
  b.f_a_b1 = diff::bind_param(tape, s.get("f_a_b1"));
  b.f_a_w2 = diff::bind_param(tape, s.get("f_a_w2"));
  b.f_a_b2 = diff::bind_param(tape, s.get("f_a_b2"));
  b.f_b_w1 = diff::bind_param(tape, s.get("f_b_w1"));
  b.f_b_b1 = diff::bind_param(tape, s.get("f_b_b1"));
  b.f_b_w2 = diff::bind_param(tape, s.get("f_b_w2"));
  b.f_b_b2 = diff::bind_param(tape, s.get("f_b_b2"));
  b.f_1_w = diff::bind_param(tape, s.get("f_1_w"));
  b.f_1_b = diff::bind_param(tape, s.get("f_1_b"));
  b.f_2_w = diff::bind_param(tape, s.get("f_2_w"));
  b.f_2_b = diff::bind_param(tape, s.get("f_2_b"));
  return b;
}

void accumulate_generator_grads(const BoundParams& bound, GeneratorParams& params) {
  diff::ParamStore& s = params.store();
  diff::accumulate_grad(bound.f_a_w1, s.get("f_a_w1"));
  diff::accumulate_grad(bound.f_a_b1, s.get("f_a_b1"));
  diff::accumulate_grad(bound.f_a_w2, s.get("f_a_w2"));
  diff::accumulate_grad(bound.f_a_b2, s.get("f_a_b2"));
  diff::accumulate_grad(bound.f_b_w1, s.get("f_b_w1"));
  diff::accumulate_grad(bound.f_b_b1, s.get("f_b_b1"));
  diff::accumulate_grad(bound.f_b_w2, s.get("f_b_w2"));
  diff::accumulate_grad(bound.f_b_b2, s.get("f_b_b2"));
  diff::accumulate_grad(bound.f_1_w, s.get("f_1_w"));
  diff::accumulate_grad(bound.f_1_b, s.get("f_1_b"));
  diff::accumulate_grad(bound.f_2_w, s.get("f_2_w"));
  diff::accumulate_grad(bound.f_2_b, s.get("f_2_b"));
}

GeneratorBatch run_generators(diff::Tape& tape, const BoundParams& bound,
                              const GhdmConfig& config, const MatrixXd& feat_i,
                              const MatrixXd& feat_j) {
  const int n = config.dim;
  const int rows = static_cast<int>(feat_i.rows());
  if (feat_i.cols() != n || feat_j.cols() != n || feat_j.rows() != rows ||
      rows < 1) {
    throw ValidationError("run_generators: feature batch shape mismatch");
  }
  if (!feat_i.allFinite() || !feat_j.allFinite()) {
    throw ValidationError("run_generators: non-finite features");
  }
  const int h = config.hidden_width();
  const int nk = n * config.rank;

  MatrixXd z(rows, 2 * n);
  z << feat_i, feat_j;
  const diff::Tensor z_t = tape.constant(flatten_row_major(z), {rows, 2 * n});
  const diff::Tensor ui_t = tape.constant(flatten_row_major(feat_i), {rows, n});
  const diff::Tensor uj_t = tape.constant(flatten_row_major(feat_j), {rows, n});
  const diff::Tensor ones =
      rows > 1 ? tape.constant(std::vector<double>(rows, 1.0), {rows, 1})
               : diff::Tensor();

  auto dense = [&](const diff::Tensor& in, const diff::Tensor& w,
                   const diff::Tensor& b, int out_dim) {
    const diff::Tensor y = diff::matmul(in, diff::transpose(w));
    const diff::Tensor row_bias = diff::reshape(b, {1, out_dim});
    if (rows == 1) return diff::add(y, row_bias);
    return diff::add(y, diff::matmul(ones, row_bias));
  };

  GeneratorBatch batch;
  batch.rows = rows;
  batch.a_res = dense(diff::tanh(dense(z_t, bound.f_a_w1, bound.f_a_b1, h)),
                      bound.f_a_w2, bound.f_a_b2, nk);
  batch.b_res = dense(diff::tanh(dense(z_t, bound.f_b_w1, bound.f_b_b1, h)),
                      bound.f_b_w2, bound.f_b_b2, nk);
  const diff::Tensor gate = diff::clamp(
      diff::sum_rows(diff::hadamard(dense(ui_t, bound.f_1_w, bound.f_1_b, n),
                                    dense(uj_t, bound.f_2_w, bound.f_2_b, n))),
      -kGateClip, kGateClip);
  const diff::Tensor sig = diff::sigmoid(gate);
  batch.c = diff::reshape(
      diff::add(diff::mul(sig, tape.scalar(config.c_max - config.c_min)),
                tape.scalar(config.c_min)),
      {rows, 1});
  return batch;
}

diff::Tensor adapted_distance_node(diff::Tape& tape, const GeneratorBatch& batch,
                                   const GhdmConfig& config, int row,
                                   const ball::BallPoint& xi,
                                   const ball::BallPoint& xj) {
  if (row < 0 || row >= batch.rows) {
    throw ValidationError("adapted_distance_node: batch row out of range");
  }
  check_base_point(xi, config, "adapted_distance_node");
  check_base_point(xj, config, "adapted_distance_node");
  const int n = config.dim;
  const int k = config.rank;
  const double lim = 1.0 - ball::kBoundaryEps;
  const double cap = 1.0 - kProjectionMargin;

  const diff::Tensor m_a =
      diff::reshape(diff::slice_rows(batch.a_res, row, row + 1), {n, k});
  const diff::Tensor m_bt =
      diff::transpose(diff::reshape(diff::slice_rows(batch.b_res, row, row + 1), {n, k}));
  const diff::Tensor c_s =
      diff::reshape(diff::slice_rows(batch.c, row, row + 1), diff::Shape{});
  const diff::Tensor sc = diff::sqrt(c_s);
  const diff::Tensor eps = tape.scalar(ball::kDenomEps);

  auto push = [&](const ball::BallPoint& x) {
    std::vector<double> coords(x.coords().data(), x.coords().data() + n);
    const diff::Tensor x0 = tape.constant(coords, {n});
    const diff::Tensor scale =
        diff::clamp(diff::div(tape.scalar(cap),
                              diff::add(diff::mul(sc, diff::l2_norm(x0)), eps)),
                    0.0, 1.0);
    const diff::Tensor xc = diff::mul(x0, scale);
    const diff::Tensor factored = diff::matmul(m_a, diff::matmul(m_bt, xc));
    const diff::Tensor mx =
        config.residual_enabled ? diff::add(xc, factored) : factored;
    const diff::Tensor nx = diff::l2_norm(xc);
    const diff::Tensor nmx = diff::l2_norm(mx);
    const diff::Tensor at = diff::arctanh(diff::clamp(diff::mul(sc, nx), -lim, lim));
    const diff::Tensor radial =
        diff::div(diff::tanh(diff::mul(diff::div(nmx, diff::add(nx, eps)), at)),
                  diff::add(diff::mul(sc, nmx), eps));
    const diff::Tensor y = diff::mul(mx, radial);
    // Amplifying projections can push tanh past the margin; rescale back
    // inside exactly as the plain evaluation path does.
    const diff::Tensor guard =
        diff::clamp(diff::div(tape.scalar(cap),
                              diff::add(diff::mul(sc, diff::l2_norm(y)), eps)),
                    0.0, 1.0);
    return diff::mul(y, guard);
  };
  const diff::Tensor yi = push(xi);
  const diff::Tensor yj = push(xj);

  const diff::Tensor nyi = diff::neg(yi);
  const diff::Tensor dot = diff::sum_pool(diff::hadamard(nyi, yj));
  const diff::Tensor ni2 = diff::sum_pool(diff::hadamard(yi, yi));
  const diff::Tensor nj2 = diff::sum_pool(diff::hadamard(yj, yj));
  const diff::Tensor one = tape.scalar(1.0);
  const diff::Tensor two = tape.scalar(2.0);
  const diff::Tensor t1 = diff::mul(two, diff::mul(c_s, dot));
  const diff::Tensor t3 = diff::mul(c_s, ni2);
  const diff::Tensor t4 = diff::mul(c_s, nj2);
  const diff::Tensor cx = diff::add(diff::add(one, t1), t4);
  const diff::Tensor cy = diff::sub(one, t3);
  const diff::Tensor den = diff::add(diff::add(one, t1), diff::mul(t3, t4));
  const diff::Tensor num = diff::add(diff::mul(nyi, cx), diff::mul(yj, cy));
  const diff::Tensor arg =
      diff::clamp(diff::mul(sc, diff::l2_norm(diff::div(num, den))), -lim, lim);
  return diff::mul(diff::div(two, sc), diff::arctanh(arg));
}

GradCheckReport gradcheck_adapted_distance(const GhdmConfig& config,
                                           std::uint64_t seed, int probes_per_param,
                                           double step) {
  config.validate();
  if (probes_per_param < 1) {
    throw ValidationError("gradcheck: probes_per_param must be positive");
  }
  if (!(step > 0.0)) throw ValidationError("gradcheck: step must be positive");

  GeneratorParams params = GeneratorParams::random_init(config, seed);
  Rng rng(substream_seed(seed, 1));
  const ball::CurvatureMag base(config.base_kappa);
  auto random_point = [&](double max_norm) {
    VectorXd v(config.dim);
    for (int i = 0; i < config.dim; ++i) v[i] = rng.normal();
    const double target = rng.uniform(0.05, 1.0) * max_norm;
    return ball::BallPoint(v * (target / v.norm()), base);
  };

  // Central differences straddling a clamp kink measure the jump, not the
  // derivative, so the probe pair is kept strictly inside the smooth region
  // of both validity rescales: inputs comfortably inside the generated ball
  // and the post-projection norm clear of the guard boundary.
  const double cap = 1.0 - kProjectionMargin;
  const double margin = 0.02;
  auto smooth_region = [&](const ball::BallPoint& pi, const ball::BallPoint& pj) {
    const VectorXd zi = origin_features(pi);
    const VectorXd zj = origin_features(pj);
    const double sc = std::sqrt(generate_curvature(params, zi, zj).c);
    const LowRankProjection proj = generate_projection(params, zi, zj);
    for (const ball::BallPoint* pt : {&pi, &pj}) {
      const double nx = pt->coords().norm();
      if (sc * nx > cap - margin) return false;
      const double nmx = proj.apply(pt->coords()).norm();
      const double at = std::atanh(sc * nx);
      const double sy = std::tanh(nmx / (nx + ball::kDenomEps) * at);
      if (sy > cap - margin) return false;
    }
    return true;
  };
  double reach = std::min(0.85 * base.ball_radius(),
                          0.9 * cap / std::sqrt(config.c_max));
  ball::BallPoint xi = random_point(reach);
  ball::BallPoint xj = random_point(reach);
  for (int attempt = 0; !smooth_region(xi, xj); ++attempt) {
    if (attempt >= 200) {
      throw ValidationError("gradcheck: no smooth probe pair found");
    }
    reach *= 0.9;
    xi = random_point(reach);
    xj = random_point(reach);
  }

  const auto forward = [&] {
    diff::Tape tape;
    const BoundParams bound = bind_generators(tape, params);
    const GeneratorBatch batch =
        run_generators(tape, bound, config, origin_features(xi).transpose(),
                       origin_features(xj).transpose());
    return adapted_distance_node(tape, batch, config, 0, xi, xj).value();
  };

  // Analytic pass.
  {
    diff::Tape tape;
    const BoundParams bound = bind_generators(tape, params);
    const GeneratorBatch batch =
        run_generators(tape, bound, config, origin_features(xi).transpose(),
                       origin_features(xj).transpose());
    tape.backward(adapted_distance_node(tape, batch, config, 0, xi, xj));
    accumulate_generator_grads(bound, params);
  }

  GradCheckReport report;
  for (diff::Param& p : params.store()) {
    for (int probe = 0; probe < probes_per_param; ++probe) {
      const std::size_t idx = rng.integer(p.value.size());
      const double saved = p.value[idx];
      p.value[idx] = saved + step;
      const double fp = forward();
      p.value[idx] = saved - step;
      const double fm = forward();
      p.value[idx] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = p.grad[idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
      report.max_rel_err =
          std::max(report.max_rel_err, std::abs(analytic - numeric) / denom);
      ++report.probes;
    }
  }
  for (diff::Param& p : params.store()) p.zero_grad();
  return report;
}

}  // namespace hypergeo::ghdm
