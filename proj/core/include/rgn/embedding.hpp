#pragma once

#include <cstddef>

#include "rgn/tensor.hpp"

namespace rgn {

/// Sinusoidal timestamp embedding settings.
struct EmbeddingConfig {
  std::size_t dim = 32;  // must be even and >= 2
  double base = 10000.0;
  /// Raw timestamps are divided by this before embedding.
  double time_scale = 1.0;

  void validate() const;
};

/// x[2k] = sin(t' / base^(2k/dim)), x[2k+1] = cos(t' / base^(2k/dim)), t' = t / time_scale.
/// Every component lies in [-1, 1]. Throws for t < 0.
Tensor embed_time(double t, const EmbeddingConfig& config);

}  // namespace rgn
