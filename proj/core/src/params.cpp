#include "hypergeo/params.hpp"

#include <algorithm>
#include <cmath>

namespace hypergeo::diff {

Param& ParamStore::add(std::string name, Shape shape, std::vector<double> values) {
  if (contains(name)) {
    throw ValidationError("param store: duplicate parameter '" + name + "'");
  }
  if (static_cast<int>(values.size()) != shape_size(shape)) {
    throw ValidationError("param store: value count does not match shape for '" +
                          name + "'");
  }
  Param p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.value = std::move(values);
  p.grad.assign(p.value.size(), 0.0);
  p.velocity.assign(p.value.size(), 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  for (Param& p : params_) {
    if (p.name == name) return p;
  }
  throw ValidationError("param store: unknown parameter '" + name + "'");
}

const Param& ParamStore::get(const std::string& name) const {
  for (const Param& p : params_) {
    if (p.name == name) return p;
  }
  throw ValidationError("param store: unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Param& p) { return p.name == name; });
}

Tensor bind_param(Tape& tape, const Param& p) {
  return tape.leaf_view(p.value.data(), p.value.size(), p.shape, true);
}

void accumulate_grad(const Tensor& t, Param& p) {
  const auto g = t.grad();
  if (g.empty()) {
    throw ValidationError("accumulate_grad: tensor has no gradient; run backward first");
  }
  if (g.size() != p.grad.size()) {
    throw ValidationError("accumulate_grad: gradient size mismatch for '" + p.name + "'");
  }
  for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
}

void sgd_step(ParamStore& store, double lr, double momentum) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ValidationError("sgd_step: learning rate must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ValidationError("sgd_step: momentum must lie in [0, 1)");
  }
  for (Param& p : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.velocity[i] = momentum * p.velocity[i] + p.grad[i];
      p.value[i] -= lr * p.velocity[i];
    }
    p.zero_grad();
  }
}

}  // namespace hypergeo::diff
