#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rgn/autodiff.hpp"
#include "rgn/param_store.hpp"

namespace rgn {

/// |a - b| / max(1, |a|, |b|)
[[nodiscard]] double relative_error(double a, double b);

struct GradCheckOptions {
  double h = 1e-6;
  double tolerance = 1e-6;
  /// Number of coordinates to sample; 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct ParamGradCheck {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> per_param;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coords_checked = 0;
  /// False when two evaluations at identical parameters disagree.
  bool deterministic = true;

  [[nodiscard]] bool passed() const { return deterministic && max_rel_error < tolerance; }
};

/// Builds a scalar loss on the given graph from the store bound to it.
using LossClosure = std::function<ad::Var(ad::Graph&)>;

/// Compares reverse-mode gradients against central finite differences.
/// Parameter values are perturbed in place and restored before returning.
GradCheckReport grad_check(const LossClosure& loss, ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace rgn
