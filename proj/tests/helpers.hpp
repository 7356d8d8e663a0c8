#pragma once

#include <cmath>
#include <string>

#include "xsum/autodiff.hpp"
#include "xsum/rng.hpp"

namespace testutil {

inline xsum::Tensor2 random_tensor(std::size_t r, std::size_t c, xsum::Rng& rng, double scale = 1.0) {
  xsum::Tensor2 t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * xsum::standard_normal(rng);
  return t;
}

inline xsum::Parameter random_param(const std::string& name, std::size_t r, std::size_t c, xsum::Rng& rng,
                                    double scale = 1.0) {
  return xsum::Parameter(name, random_tensor(r, c, rng, scale));
}

/// Central-difference derivative of a scalar function of one tensor entry.
template <class F>
double numeric_partial(F&& f, double& slot, double h = 1e-6) {
  const double keep = slot;
  slot = keep + h;
  const double up = f();
  slot = keep - h;
  const double down = f();
  slot = keep;
  return (up - down) / (2.0 * h);
}

}  // namespace testutil
