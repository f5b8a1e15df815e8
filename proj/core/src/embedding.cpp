#include "rgn/embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rgn {

void EmbeddingConfig::validate() const {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("embedding dimension must be even and >= 2, got " +
                                std::to_string(dim));
  }
  if (!(base > 1.0)) throw std::invalid_argument("embedding base must be > 1");
  if (!(time_scale > 0.0)) throw std::invalid_argument("time_scale must be > 0");
}

Tensor embed_time(double t, const EmbeddingConfig& config) {
  if (!(t >= 0.0)) {
    throw std::invalid_argument("embed_time: timestamp must be >= 0, got " + std::to_string(t));
  }
  config.validate();
  const double scaled = t / config.time_scale;
  Tensor x({config.dim});
  const double d = static_cast<double>(config.dim);
  for (std::size_t k = 0; k < config.dim / 2; ++k) {
    const double freq = std::pow(config.base, -2.0 * static_cast<double>(k) / d);
    const double angle = scaled * freq;
    x[2 * k] = std::sin(angle);
    x[2 * k + 1] = std::cos(angle);
  }
  return x;
}

}  // namespace rgn
