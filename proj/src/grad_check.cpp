#include "xsum/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xsum/error.hpp"

namespace xsum {

double evaluate(const ScalarFn& fn) {
  Tape tape(false);
  const double v = fn(tape).value().item();
  if (!std::isfinite(v)) throw EvaluationError("grad_check: function value is not finite");
  return v;
}

GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Parameter*>& params, double step,
                           double tolerance) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  double f0 = 0.0;
  {
    Tape tape(true);
    Var loss = fn(tape);
    f0 = loss.value().item();
    if (!std::isfinite(f0)) {
      throw EvaluationError("grad_check: function value is not finite");
    }
    if (tape.recorded_ops() > 0) tape.backward(loss);
  }

  // Central differences carry roundoff of about eps*|f|/step. Gradients below
  // that scale (e.g. exactly-zero ones) are compared against the floor instead
  // of their own magnitude, otherwise noise alone would fail the check.
  const double noise = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / step;
  const double floor = std::max(1e-8, tolerance > 0.0 ? 10.0 * noise / tolerance : 0.0);

  GradCheckReport report;
  for (Parameter* p : params) {
    ParamCheck check{p->name, 0.0, 0.0, 0.0};
    double max_diff = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = evaluate(fn);
      p->value[i] = orig - step;
      const double down = evaluate(fn);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      check.max_analytic = std::max(check.max_analytic, std::abs(analytic));
      check.max_numeric = std::max(check.max_numeric, std::abs(numeric));
    }
    check.max_rel_error = max_diff / std::max({check.max_analytic, check.max_numeric, floor});
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.params.push_back(check);
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace xsum
