#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xsum/autodiff.hpp"

namespace xsum {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_analytic = 0.0;
  double max_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients to central differences.
///
/// The error for one parameter tensor is max|analytic − numeric| divided by
/// max(max|analytic|, max|numeric|, floor), so entries that are tiny relative
/// to the rest of the tensor do not dominate through cancellation noise. The
/// floor is 10·eps·max(1,|f|)/(step·tolerance), at least 1e-8: a tensor whose
/// true gradient sits at the difference-roundoff level is judged absolutely.
/// `fn` must be deterministic (freeze any noise before calling).
GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Parameter*>& params, double step,
                           double tolerance);

/// Scalar value of `fn` without recording.
double evaluate(const ScalarFn& fn);

}  // namespace xsum
