#include "rgn/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace rgn {

std::size_t ParamStore::add(std::string name, Tensor init) {
  if (lookup_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  const std::size_t i = values_.size();
  lookup_.emplace(name, i);
  names_.push_back(std::move(name));
  grads_.emplace_back(init.shape());
  m_.emplace_back(init.shape());
  v_.emplace_back(init.shape());
  has_grad_.push_back(false);
  values_.push_back(std::move(init));
  return i;
}

bool ParamStore::contains(std::string_view name) const {
  return lookup_.contains(std::string(name));
}

std::size_t ParamStore::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) {
    throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

void ParamStore::zero_grad() {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    grads_[i].fill(0.0);
    has_grad_[i] = true;
  }
}

void ParamStore::clear_grad() {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    grads_[i].fill(0.0);
    has_grad_[i] = false;
  }
}

void ParamStore::accumulate_grad(std::size_t i, const Tensor& g) {
  if (g.shape() != values_[i].shape()) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match parameter '" +
                     names_[i] + "' shape " + shape_string(values_[i].shape()));
  }
  if (!has_grad_[i]) {
    grads_[i].fill(0.0);
    has_grad_[i] = true;
  }
  grads_[i].accumulate(g);
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!has_grad_[i]) continue;
    for (double g : grads_[i].data()) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParamStore::scale_grads(double factor) {
  for (auto& g : grads_) {
    for (double& x : g.data()) x *= factor;
  }
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

}  // namespace rgn
