#pragma once

#include <cmath>

#include "cdc/common.hpp"
#include "cdc/rng.hpp"

namespace cdc {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

namespace detail {

struct RunningStats {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / double(n);
    m2 += d * (x - mean);
  }
  MeanSe finish() const {
    MeanSe out;
    out.mean = mean;
    out.se = n > 1 ? std::sqrt(m2 / double(n - 1) / double(n)) : 0.0;
    return out;
  }
};

}  // namespace detail

// Monte Carlo estimate of E[max{0, q_1 + alpha*L1, ..., q_m + alpha*L1}]
// with q_i iid uniform on [-L1, L1].
inline MeanSe oe_max_expectation(double L1, int m, double alpha, long trials, Rng& rng) {
  if (trials < 1) throw Error("oe_max_expectation: trials must be positive");
  if (m < 1) throw Error("oe_max_expectation: m must be positive");
  detail::RunningStats stats;
  const double shift = alpha * L1;
  for (long t = 0; t < trials; ++t) {
    double best = 0.0;
    for (int i = 0; i < m; ++i) best = std::max(best, rng.uniform(-L1, L1) + shift);
    stats.add(best);
  }
  return stats.finish();
}

// Closed form of the same expectation, evaluated from the defining integral
//   m*L1 * Int_{(1-alpha)/2}^{1} (2y - (1-alpha)) y^{m-1} dy
// which integrates to 2mL1(1-c^{m+1})/(m+1) - 2L1 c(1-c^m), c = (1-alpha)/2.
// This is the form that reproduces the m=2, alpha=0 value of 5/12 and the
// large-m limit L1*(1+alpha).
inline double oe_closed_form(double L1, int m, double alpha) {
  if (m < 1) throw Error("oe_closed_form: m must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error("oe_closed_form: alpha must lie in [0,1)");
  const double c = (1.0 - alpha) / 2.0;
  const double cm = std::pow(c, double(m));
  return 2.0 * m * L1 * (1.0 - cm * c) / double(m + 1) - 2.0 * L1 * c * (1.0 - cm);
}

// Fully expanded variant of the same quantity that circulates in one
// algebraic form; it does NOT agree with the integral (it gives 3/8 instead
// of 5/12 at m=2, alpha=0). Kept so the test suite can document the mismatch
// against the Monte Carlo estimator.
inline double oe_closed_form_variant(double L1, int m, double alpha) {
  if (m < 1) throw Error("oe_closed_form_variant: m must be positive");
  const double c = (1.0 - alpha) / 2.0;
  return m * L1 * (2.0 / double(m + 1) - (1.0 - alpha) / double(m)) +
         L1 * std::pow(c, double(m + 1)) / double(m + 1);
}

// Validity conditions for the overestimation-ordering simulation:
//   mu < (1 - alpha) / (2*alpha*eta)   (vacuous for alpha = 0 or eta = 0)
//   m >= 1 / (1/2 - 1/(1 + eta*mu))    (vacuous for eta*mu <= 1, where the
//                                       printed bound is negative)
inline bool theorem3_conditions(double eta, double mu, double alpha, int m) {
  if (alpha > 0.0 && eta > 0.0 && !(mu < (1.0 - alpha) / (2.0 * alpha * eta))) return false;
  const double denom = 0.5 - 1.0 / (1.0 + eta * mu);
  if (denom > 0.0 && double(m) < 1.0 / denom) return false;
  return true;
}

struct OeSimResult {
  MeanSe cdc;
  MeanSe baseline;
  bool conditions_ok = true;
};

// Monte Carlo comparison of the overestimation error with and without the
// penalty gradient step, on the piecewise function approximator
// <q, V, Q_ID> over an m-way action partition:
//   cell i value:  V + q_i        (q_i ~ U[-L1, L1], V starts at the true value)
//   observed pair: Q_ID           (Q_ID ~ true value + U[-alpha*L1, alpha*L1])
// The penalized update shifts parameters by mu*eta*eps_+ along
// (grad Q(s, a_max) - grad Q(s, a_ID)), which lowers the best cell by twice
// the shift, every other cell by the shift, and raises Q_ID by the shift.
// Overestimation error is max(all values) minus the true max; `center` is the
// common true value (the error is invariant to it, and that invariance is
// itself under test).
inline OeSimResult oe_simulation(double eta, double mu, double alpha, double L1, int m,
                                 long trials, Rng& rng, double center = 0.0) {
  if (trials < 1) throw Error("oe_simulation: trials must be positive");
  if (m < 1) throw Error("oe_simulation: m must be positive");
  OeSimResult out;
  out.conditions_ok = theorem3_conditions(eta, mu, alpha, m);
  detail::RunningStats base_stats, cdc_stats;
  std::vector<double> q(static_cast<std::size_t>(m));
  for (long t = 0; t < trials; ++t) {
    double qmax = -2.0 * L1, qsecond = -2.0 * L1;
    for (int i = 0; i < m; ++i) {
      q[std::size_t(i)] = rng.uniform(-L1, L1);
      if (q[std::size_t(i)] > qmax) {
        qsecond = qmax;
        qmax = q[std::size_t(i)];
      } else if (q[std::size_t(i)] > qsecond) {
        qsecond = q[std::size_t(i)];
      }
    }
    const double q_id = center + rng.uniform(-alpha * L1, alpha * L1);
    const double best_cell = center + qmax;
    base_stats.add(std::max(q_id, best_cell) - center);

    const double eps = best_cell - q_id;
    const double delta = eps > 0.0 ? mu * eta * eps : 0.0;
    double after = std::max(q_id + delta, best_cell - 2.0 * delta);
    if (m > 1) after = std::max(after, center + qsecond - delta);
    cdc_stats.add(after - center);
  }
  out.baseline = base_stats.finish();
  out.cdc = cdc_stats.finish();
  return out;
}

}  // namespace cdc
