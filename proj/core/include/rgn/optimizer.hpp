#pragma once

#include "rgn/param_store.hpp"

namespace rgn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update over every parameter in the store, then
/// clears the gradients. Throws if any parameter has no gradient.
void adam_step(ParamStore& store, const AdamConfig& config = {});

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace rgn
