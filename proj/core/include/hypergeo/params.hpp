#pragma once

#include <string>
#include <vector>

#include "hypergeo/errors.hpp"
#include "hypergeo/tensor.hpp"

namespace hypergeo::diff {

/// Named trainable array with its gradient accumulator and momentum buffer.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> velocity;

  int size() const { return static_cast<int>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Insertion-ordered collection of parameters, looked up by name.
class ParamStore {
 public:
  Param& add(std::string name, Shape shape, std::vector<double> values);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
};

/// Registers a parameter on the tape as a differentiable leaf aliasing the
/// parameter's storage. No values are copied.
Tensor bind_param(Tape& tape, const Param& p);

/// Adds the tensor's gradient (populated by Tape::backward) into p.grad.
void accumulate_grad(const Tensor& t, Param& p);

/// One SGD-with-momentum update over every parameter in the store:
/// v <- momentum * v + grad, p <- p - lr * v, then gradients are zeroed.
void sgd_step(ParamStore& store, double lr, double momentum);

}  // namespace hypergeo::diff
