#pragma once

#include <span>
#include <vector>

#include "xsum/autodiff.hpp"

namespace xsum {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

struct AdamWState {
  std::size_t step = 0;
  std::vector<Tensor2> m, v;
};

/// One AdamW update from each parameter's accumulated gradient: decoupled
/// weight decay, then the bias-corrected moment step. Throws
/// DivergenceError (naming the parameter) on a non-finite gradient and
/// leaves every parameter untouched in that case.
void adamw_step(std::span<Parameter* const> params, AdamWState& state, const AdamWConfig& cfg);

/// Global L2 norm of all gradients.
double grad_norm(std::span<Parameter* const> params);
/// Rescales gradients so their global norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace xsum
