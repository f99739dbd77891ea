#include "hypergeo/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace hypergeo::diff {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>;
using MutMatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ValidationError(std::string(op) + ": operands must live on one tape");
  }
}

bool is_scalar(const Tensor& t) { return shape_size(t.shape()) == 1; }

[[noreturn]] void shape_error(const char* op) {
  throw ValidationError(std::string(op) + ": shape mismatch");
}

/// Adds src into dst, reducing to a single slot when dst is scalar-shaped.
void scatter_accumulate(std::span<double> dst, std::span<const double> src) {
  if (dst.empty()) return;
  if (dst.size() == 1) {
    double s = 0.0;
    for (double v : src) s += v;
    dst[0] += s;
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

/// Elementwise binary with scalar broadcast on either side.
template <typename FwdFn, typename BwdFn>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b,
                          FwdFn fwd, BwdFn bwd_pair) {
  require_same_tape(a, b, op);
  const bool a_scalar = is_scalar(a);
  const bool b_scalar = is_scalar(b);
  if (!a_scalar && !b_scalar && !same_shape(a.shape(), b.shape())) shape_error(op);
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const int n = shape_size(out_shape);

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : static_cast<std::size_t>(i)];
    const double y = bv[b_scalar ? 0 : static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = fwd(x, y);
  }

  Tape& tape = *a.tape();
  const int a_id = a.id();
  const int b_id = b.id();
  return tape.emit(
      op, out_shape, std::move(out), a.requires_grad() || b.requires_grad(),
      [a_id, b_id, a_scalar, b_scalar, bwd_pair](Tape& t, int out_id) {
        const auto& gout = t.node(out_id).grad;
        const auto av2 = t.node_values(a_id);
        const auto bv2 = t.node_values(b_id);
        auto ga = t.node_grad(a_id);
        auto gb = t.node_grad(b_id);
        std::vector<double> da(ga.empty() ? 0 : gout.size());
        std::vector<double> db(gb.empty() ? 0 : gout.size());
        for (std::size_t i = 0; i < gout.size(); ++i) {
          const double x = av2[a_scalar ? 0 : i];
          const double y = bv2[b_scalar ? 0 : i];
          const auto [dx, dy] = bwd_pair(x, y);
          if (!da.empty()) da[i] = gout[i] * dx;
          if (!db.empty()) db[i] = gout[i] * dy;
        }
        if (!da.empty()) scatter_accumulate(ga, da);
        if (!db.empty()) scatter_accumulate(gb, db);
      });
}

/// Elementwise unary. The backward lambda receives (input value, output value).
template <typename FwdFn, typename BwdFn>
Tensor elementwise_unary(const char* op, const Tensor& a, FwdFn fwd, BwdFn bwd) {
  if (!a.valid()) throw ValidationError(std::string(op) + ": invalid tensor");
  const int n = shape_size(a.shape());
  const auto av = a.values();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fwd(av[static_cast<std::size_t>(i)]);

  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit(op, a.shape(), std::move(out), a.requires_grad(),
                   [a_id, bwd](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto gout = t.node(out_id).grad;
                     const auto av2 = t.node_values(a_id);
                     const auto ov = t.node_values(out_id);
                     for (std::size_t i = 0; i < gout.size(); ++i) {
                       ga[i] += gout[i] * bwd(av2[i], ov[i]);
                     }
                   });
}

}  // namespace

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d < 0) throw ValidationError("shape: negative dimension");
    n *= d;
  }
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }

std::span<const double> Tensor::values() const { return tape_->node_values(id_); }

double Tensor::value() const {
  const auto v = values();
  if (v.size() != 1) throw ValidationError("Tensor::value: tensor is not a scalar");
  return v[0];
}

std::span<const double> Tensor::grad() const {
  const auto& n = tape_->node(id_);
  return {n.grad.data(), n.grad.size()};
}

bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

Tensor Tape::leaf(std::span<const double> values, Shape shape, bool requires_grad) {
  if (static_cast<int>(values.size()) != shape_size(shape)) {
    throw ValidationError("leaf: value count does not match shape");
  }
  return emit("leaf", std::move(shape), std::vector<double>(values.begin(), values.end()),
              requires_grad, nullptr);
}

Tensor Tape::leaf_view(const double* data, std::size_t size, Shape shape,
                       bool requires_grad) {
  if (static_cast<int>(size) != shape_size(shape)) {
    throw ValidationError("leaf_view: value count does not match shape");
  }
  Node n;
  n.shape = std::move(shape);
  n.data = data;
  n.size = static_cast<int>(size);
  n.requires_grad = requires_grad;
  n.op = "leaf";
  check_finite(n);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::constant(std::span<const double> values, Shape shape) {
  return leaf(values, std::move(shape), false);
}

Tensor Tape::scalar(double v) {
  const double vv = v;
  return leaf(std::span<const double>(&vv, 1), Shape{}, false);
}

Tensor Tape::emit(const char* op, Shape shape, std::vector<double> values,
                  bool requires_grad, std::function<void(Tape&, int)> backward_fn) {
  Node n;
  n.shape = std::move(shape);
  n.storage = std::move(values);
  n.data = n.storage.data();
  n.size = static_cast<int>(n.storage.size());
  n.requires_grad = requires_grad;
  n.op = op;
  n.backward_fn = std::move(backward_fn);
  check_finite(n);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

const Tape::Node& Tape::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw ValidationError("tape: detached or out-of-range node handle");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

std::span<const double> Tape::node_values(int id) const {
  const Node& n = node(id);
  return {n.data, static_cast<std::size_t>(n.size)};
}

std::span<double> Tape::node_grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return {};
  return {n.grad.data(), n.grad.size()};
}

void Tape::check_finite(const Node& n) const {
  for (int i = 0; i < n.size; ++i) {
    if (!std::isfinite(n.data[i])) {
      throw NumericalFault(n.op, "non-finite value produced");
    }
  }
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) {
    throw ValidationError("backward: loss does not belong to this tape");
  }
  if (backward_ran_) {
    throw ValidationError("backward: tape already consumed; reset() first");
  }
  const Node& ln = node(loss.id());
  if (ln.size != 1) throw ValidationError("backward: loss must be a scalar");

  // Zero-initialize gradients of every differentiable node.
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad.assign(static_cast<std::size_t>(n.size), 0.0);
  }
  if (ln.requires_grad) {
    nodes_[static_cast<std::size_t>(loss.id())].grad[0] = 1.0;
  }
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad && n.backward_fn) n.backward_fn(*this, id);
  }
  backward_ran_ = true;
}

void Tape::reset() {
  nodes_.clear();
  backward_ran_ = false;
  matmul_macs_ = 0;
}

// ---- primitives ----

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y) {
        return std::pair<double, double>{1.0 / y, -x / (y * y)};
      });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "hadamard");
  if (!same_shape(a.shape(), b.shape())) shape_error("hadamard");
  return elementwise_binary(
      "hadamard", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || (sb.size() != 1 && sb.size() != 2)) shape_error("matmul");
  const int m = sa[0];
  const int n = sa[1];
  const bool vec = sb.size() == 1;
  const int p = vec ? 1 : sb[1];
  if ((vec ? sb[0] : sb[0]) != n) shape_error("matmul");

  std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(p));
  {
    MatMap ma(a.values().data(), m, n);
    MatMap mb(b.values().data(), n, p);
    MutMatMap mo(out.data(), m, p);
    mo.noalias() = ma * mb;
  }
  Tape& tape = *a.tape();
  tape.count_matmul_macs(static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n) *
                         static_cast<std::uint64_t>(p));

  const int a_id = a.id();
  const int b_id = b.id();
  const Shape out_shape = vec ? Shape{m} : Shape{m, p};
  return tape.emit(
      "matmul", out_shape, std::move(out), a.requires_grad() || b.requires_grad(),
      [a_id, b_id, m, n, p](Tape& t, int out_id) {
        MatMap g(t.node(out_id).grad.data(), m, p);
        auto ga = t.node_grad(a_id);
        auto gb = t.node_grad(b_id);
        if (!ga.empty()) {
          MatMap mb(t.node_values(b_id).data(), n, p);
          MutMatMap mga(ga.data(), m, n);
          mga.noalias() += g * mb.transpose();
          t.count_matmul_macs(static_cast<std::uint64_t>(m) *
                              static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(p));
        }
        if (!gb.empty()) {
          MatMap ma(t.node_values(a_id).data(), m, n);
          MutMatMap mgb(gb.data(), n, p);
          mgb.noalias() += ma.transpose() * g;
          t.count_matmul_macs(static_cast<std::uint64_t>(m) *
                              static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(p));
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (!a.valid()) throw ValidationError("transpose: invalid tensor");
  const Shape& s = a.shape();
  if (s.size() != 2) shape_error("transpose");
  const int m = s[0];
  const int n = s[1];
  std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  const auto av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) +
          static_cast<std::size_t>(i)] =
          av[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
             static_cast<std::size_t>(j)];
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("transpose", Shape{n, m}, std::move(out), a.requires_grad(),
                   [a_id, m, n](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto& gout = t.node(out_id).grad;
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         ga[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                            static_cast<std::size_t>(j)] +=
                             gout[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) +
                                  static_cast<std::size_t>(i)];
                   });
}

Tensor neg(const Tensor& a) {
  return elementwise_unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor sum_pool(const Tensor& a) {
  if (!a.valid()) throw ValidationError("sum_pool: invalid tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("sum_pool", Shape{}, {s}, a.requires_grad(),
                   [a_id](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const double g = t.node(out_id).grad[0];
                     for (double& v : ga) v += g;
                   });
}

Tensor sum_rows(const Tensor& a) {
  if (!a.valid()) throw ValidationError("sum_rows: invalid tensor");
  const Shape& s = a.shape();
  if (s.size() != 2) shape_error("sum_rows");
  const int m = s[0];
  const int n = s[1];
  const auto av = a.values();
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i)] +=
          av[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
             static_cast<std::size_t>(j)];
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("sum_rows", Shape{m}, std::move(out), a.requires_grad(),
                   [a_id, m, n](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto& gout = t.node(out_id).grad;
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         ga[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                            static_cast<std::size_t>(j)] += gout[static_cast<std::size_t>(i)];
                   });
}

Tensor l2_norm(const Tensor& a) {
  if (!a.valid()) throw ValidationError("l2_norm: invalid tensor");
  double sq = 0.0;
  for (double v : a.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("l2_norm", Shape{}, {norm}, a.requires_grad(),
                   [a_id](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const double g = t.node(out_id).grad[0];
                     const double norm_v = t.node_values(out_id)[0];
                     const auto av = t.node_values(a_id);
                     const double inv = 1.0 / (norm_v + 1e-15);
                     for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * av[i] * inv;
                   });
}

Tensor tanh(const Tensor& a) {
  return elementwise_unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor arctanh(const Tensor& a) {
  return elementwise_unary(
      "arctanh", a, [](double x) { return std::atanh(x); },
      [](double x, double) { return 1.0 / (1.0 - x * x); });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary(
      "sigmoid", a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& a) {
  if (!a.valid()) throw ValidationError("softmax: invalid tensor");
  if (a.shape().size() != 1) shape_error("softmax");
  const auto av = a.values();
  const double mx = *std::max_element(av.begin(), av.end());
  std::vector<double> out(av.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = std::exp(av[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("softmax", a.shape(), std::move(out), a.requires_grad(),
                   [a_id](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto& gout = t.node(out_id).grad;
                     const auto y = t.node_values(out_id);
                     double dot = 0.0;
                     for (std::size_t i = 0; i < y.size(); ++i) dot += gout[i] * y[i];
                     for (std::size_t i = 0; i < y.size(); ++i)
                       ga[i] += y[i] * (gout[i] - dot);
                   });
}

Tensor log(const Tensor& a) {
  return elementwise_unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return elementwise_unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ValidationError("clamp: lo must not exceed hi");
  return elementwise_unary(
      "clamp", a,
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "concat");
  if (a.shape().size() != 1 || b.shape().size() != 1) shape_error("concat");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out;
  out.reserve(av.size() + bv.size());
  out.insert(out.end(), av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  Tape& tape = *a.tape();
  const int a_id = a.id();
  const int b_id = b.id();
  const int na = static_cast<int>(av.size());
  return tape.emit("concat", Shape{na + static_cast<int>(bv.size())}, std::move(out),
                   a.requires_grad() || b.requires_grad(),
                   [a_id, b_id, na](Tape& t, int out_id) {
                     const auto& gout = t.node(out_id).grad;
                     auto ga = t.node_grad(a_id);
                     auto gb = t.node_grad(b_id);
                     if (!ga.empty())
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
                     if (!gb.empty())
                       for (std::size_t i = 0; i < gb.size(); ++i)
                         gb[i] += gout[static_cast<std::size_t>(na) + i];
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (!a.valid()) throw ValidationError("reshape: invalid tensor");
  if (shape_size(shape) != shape_size(a.shape())) shape_error("reshape");
  const auto av = a.values();
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("reshape", std::move(shape),
                   std::vector<double>(av.begin(), av.end()), a.requires_grad(),
                   [a_id](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto& gout = t.node(out_id).grad;
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
                   });
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
  if (!a.valid()) throw ValidationError("slice_rows: invalid tensor");
  const Shape& s = a.shape();
  if (s.size() != 2) shape_error("slice_rows");
  const int m = s[0];
  const int n = s[1];
  if (begin < 0 || end > m || begin >= end) {
    throw ValidationError("slice_rows: row range out of bounds");
  }
  const auto av = a.values();
  std::vector<double> out(
      av.begin() + static_cast<std::ptrdiff_t>(begin) * n,
      av.begin() + static_cast<std::ptrdiff_t>(end) * n);
  Tape& tape = *a.tape();
  const int a_id = a.id();
  return tape.emit("slice_rows", Shape{end - begin, n}, std::move(out),
                   a.requires_grad(), [a_id, begin, n](Tape& t, int out_id) {
                     auto ga = t.node_grad(a_id);
                     if (ga.empty()) return;
                     const auto& gout = t.node(out_id).grad;
                     const std::size_t off =
                         static_cast<std::size_t>(begin) * static_cast<std::size_t>(n);
                     for (std::size_t i = 0; i < gout.size(); ++i) ga[off + i] += gout[i];
                   });
}

}  // namespace hypergeo::diff
