#pragma once

#include <algorithm>
#include <functional>

#include "cdc/net.hpp"

namespace cdc {

// Relative error that stays stable when both values are near zero.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  if (std::abs(analytic) < 1e-12 && std::abs(numeric) < 1e-12) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

// Central-difference check of an analytic gradient. `f` evaluates the scalar
// objective at the given flat parameter vector; `analytic` is d f / d params
// at `params`. Returns the worst per-coordinate relative error.
inline double grad_check(const std::function<double(const VectorXd&)>& f,
                         const VectorXd& params, const VectorXd& analytic,
                         double h = 1e-5) {
  if (h <= 0) throw Error("grad_check: h must be positive");
  if (params.size() != analytic.size()) throw ShapeError("grad_check: size mismatch");
  double worst = 0.0;
  VectorXd p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p(i);
    p(i) = orig + h;
    const double fp = f(p);
    p(i) = orig - h;
    const double fm = f(p);
    p(i) = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, relative_error(analytic(i), numeric));
  }
  return worst;
}

}  // namespace cdc
