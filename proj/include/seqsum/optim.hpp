#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "seqsum/tensor.hpp"

namespace seqsum {

struct AdamState {
  double learning_rate = 1e-4;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

// Global L2 norm over all gradients.
double global_grad_norm(std::span<Parameter* const> params);

// Scales every gradient by clip_norm/||g|| when ||g|| exceeds clip_norm, applies
// one bias-corrected Adam update, then zeroes the gradients. Returns the norm
// measured before clipping.
double clip_and_step(AdamState& state, std::span<Parameter* const> params);

// Largest elementwise |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// between backward() and central differences of the scalar program `f`.
// Throws if `f` is not deterministic.
double grad_check(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params,
                  double epsilon = 1e-4);

}  // namespace seqsum
