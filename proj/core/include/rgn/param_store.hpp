#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rgn/tensor.hpp"

namespace rgn {

/// Named learnable parameters with their gradients and ADAM moments.
///
/// Gradients have three states per parameter: missing (after construction or
/// an optimizer step), zeroed, or accumulated. adam_step refuses to step a
/// parameter whose gradient is missing.
class ParamStore {
 public:
  /// Registers a parameter and returns its index. Duplicate names throw.
  std::size_t add(std::string name, Tensor init);

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] std::size_t index(std::string_view name) const;
  [[nodiscard]] const std::string& name(std::size_t i) const { return names_[i]; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  [[nodiscard]] const Tensor& value(std::size_t i) const { return values_[i]; }
  [[nodiscard]] Tensor& value(std::size_t i) { return values_[i]; }
  [[nodiscard]] const Tensor& value(std::string_view name) const { return values_[index(name)]; }
  [[nodiscard]] Tensor& value(std::string_view name) { return values_[index(name)]; }

  [[nodiscard]] bool has_grad(std::size_t i) const { return has_grad_[i]; }
  [[nodiscard]] const Tensor& grad(std::size_t i) const { return grads_[i]; }
  [[nodiscard]] Tensor& grad(std::size_t i) { return grads_[i]; }

  /// Marks every gradient present and zero.
  void zero_grad();
  /// Marks every gradient missing.
  void clear_grad();
  /// Adds into the gradient of parameter i, marking it present.
  void accumulate_grad(std::size_t i, const Tensor& g);

  [[nodiscard]] double grad_norm() const;
  void scale_grads(double factor);

  [[nodiscard]] const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  [[nodiscard]] const Tensor& second_moment(std::size_t i) const { return v_[i]; }
  Tensor& first_moment(std::size_t i) { return m_[i]; }
  Tensor& second_moment(std::size_t i) { return v_[i]; }
  [[nodiscard]] std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t step) { step_ = step; }

  [[nodiscard]] std::size_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace rgn
