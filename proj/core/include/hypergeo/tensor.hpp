#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hypergeo/errors.hpp"

namespace hypergeo::diff {

/// Rank 0 (scalar), 1 (vector) or 2 (matrix). Row-major storage.
using Shape = std::vector<int>;

int shape_size(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

class Tape;

/// Lightweight handle to a node on a tape. Values are immutable once written;
/// gradients become available after Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::span<const double> values() const;
  /// Single-element convenience accessor.
  double value() const;
  /// Gradient of the last backward pass; empty for non-differentiable nodes.
  std::span<const double> grad() const;
  bool requires_grad() const;

  int id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Ordered record of primitive operations. Dense, no fusion, no broadcasting
/// beyond scalar-tensor. One backward pass per forward build unless reset.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding its own copy of `values`.
  Tensor leaf(std::span<const double> values, Shape shape, bool requires_grad);
  /// Leaf aliasing external storage (caller keeps it alive and unchanged for
  /// the life of the tape). Saves a copy for large parameter blocks.
  Tensor leaf_view(const double* data, std::size_t size, Shape shape,
                   bool requires_grad);
  Tensor constant(std::span<const double> values, Shape shape);
  Tensor scalar(double v);

  /// Reverse sweep from a scalar loss. Gradients of every requires_grad node
  /// reachable from the loss are populated (zero-initialized first).
  void backward(const Tensor& loss);

  /// Clears the tape for reuse; outstanding Tensor handles become invalid.
  void reset();

  bool backward_ran() const noexcept { return backward_ran_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Multiply-add count accumulated by matmul nodes since construction/reset.
  /// Tests use this to pin the asymptotic cost of hot paths.
  std::uint64_t matmul_macs() const noexcept { return matmul_macs_; }

  // --- internal surface used by the primitive implementations ---
  struct Node {
    Shape shape;
    std::vector<double> storage;   // owned values; empty for views
    const double* data = nullptr;  // points into storage or external memory
    int size = 0;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<double> grad;  // allocated by backward
    std::function<void(Tape&, int)> backward_fn;  // nullptr for leaves
  };

  Tensor emit(const char* op, Shape shape, std::vector<double> values,
              bool requires_grad, std::function<void(Tape&, int)> backward_fn);
  const Node& node(int id) const;
  std::span<const double> node_values(int id) const;
  /// Accumulation target during backward; empty span if the node does not
  /// require gradients.
  std::span<double> node_grad(int id);
  void count_matmul_macs(std::uint64_t macs) { matmul_macs_ += macs; }

 private:
  void check_finite(const Node& n) const;

  std::vector<Node> nodes_;
  bool backward_ran_ = false;
  std::uint64_t matmul_macs_ = 0;
};

// ---- primitives ----
// Elementwise binaries accept equal shapes or a scalar on either side
// (scalar-tensor is the only broadcast). hadamard is the strict same-shape
// product used by the bilinear-pooling formulas.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// (m x n)·(n x p) -> (m x p) or (m x n)·(n) -> (m). Counts m*n*p MACs.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor neg(const Tensor& a);
Tensor sum_pool(const Tensor& a);           // sum of all entries -> scalar
Tensor sum_rows(const Tensor& a);           // (m x n) -> (m), row sums
Tensor l2_norm(const Tensor& a);            // sqrt(sum of squares) -> scalar
Tensor tanh(const Tensor& a);
Tensor arctanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a);            // 1-D only
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);  // grad 1 inside, 0 outside
Tensor concat(const Tensor& a, const Tensor& b);      // 1-D concatenation
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, int begin, int end);  // rows of a matrix

}  // namespace hypergeo::diff
