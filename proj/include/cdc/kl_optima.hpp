#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "cdc/common.hpp"
#include "cdc/rng.hpp"

namespace cdc {

// Closed-form maximizers of E_pi[Q] - lambda * D(pi, pi_b) on a finite action
// set, for both KL directions, together with a projected-gradient oracle that
// maximizes the same objectives directly on the simplex.

inline void check_lemma1_inputs(const Eigen::VectorXd& q, const Eigen::VectorXd& pb,
                                double lambda) {
  if (q.size() != pb.size() || q.size() < 2) throw ShapeError("need matching Q/pi_b, |A| >= 2");
  if (lambda <= 0.0) throw Error("lambda must be positive");
  if ((pb.array() <= 0.0).any()) throw Error("pi_b must be strictly positive");
  if (std::abs(pb.sum() - 1.0) > 1e-9) throw Error("pi_b must sum to 1");
}

// D = KL(pi, pi_b): exponential tilt pi(a) = pi_b(a) exp(Q(a)/lambda) / Z.
inline Eigen::VectorXd forward_kl_optimum(const Eigen::VectorXd& q, const Eigen::VectorXd& pb,
                                          double lambda) {
  check_lemma1_inputs(q, pb, lambda);
  Eigen::VectorXd logw = pb.array().log() + q.array() / lambda;
  const double m = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - m).exp();
  return w / w.sum();
}

// D = KL(pi_b, pi): pi(a) = pi_b(a) / (Z - Q(a)/lambda) with Z solved by
// bisection on the normalization constraint. The constraint is strictly
// decreasing in Z on (max Q/lambda, infinity), so the root is unique.
inline Eigen::VectorXd reverse_kl_optimum(const Eigen::VectorXd& q, const Eigen::VectorXd& pb,
                                          double lambda) {
  check_lemma1_inputs(q, pb, lambda);
  const Eigen::VectorXd ql = q / lambda;
  const double zmin = ql.maxCoeff();
  auto mass = [&](double z) { return (pb.array() / (z - ql.array())).sum(); };

  double step = 1.0;
  // shrink toward the pole until the mass exceeds 1
  int guard = 0;
  while (mass(zmin + step) < 1.0) {
    step *= 0.5;
    if (++guard > 2000) throw Error("reverse_kl_optimum: no valid normalizer found");
  }
  double lo = zmin + step;
  double hi = lo;
  guard = 0;
  while (mass(hi) > 1.0) {
    hi = zmin + (hi - zmin) * 2.0;
    if (++guard > 2000) throw Error("reverse_kl_optimum: no valid normalizer found");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double z = 0.5 * (lo + hi);
  Eigen::VectorXd pi = pb.array() / (z - ql.array());
  return pi / pi.sum();
}

// E_pi[Q] - lambda * KL in the requested direction; the x log x terms use the
// zero limit at the boundary.
inline double regularized_objective(const Eigen::VectorXd& pi, const Eigen::VectorXd& q,
                                    const Eigen::VectorXd& pb, double lambda, bool reverse) {
  double val = pi.dot(q);
  if (reverse) {
    for (int a = 0; a < pi.size(); ++a) {
      if (pi(a) <= 0.0) return -std::numeric_limits<double>::infinity();
      val -= lambda * pb(a) * std::log(pb(a) / pi(a));
    }
  } else {
    for (int a = 0; a < pi.size(); ++a) {
      if (pi(a) > 0.0) val -= lambda * pi(a) * std::log(pi(a) / pb(a));
    }
  }
  return val;
}

namespace detail {

inline double objective_partial(double x, double q, double pb, double lambda, bool reverse) {
  return reverse ? q + lambda * pb / x : q - lambda * (std::log(x / pb) + 1.0);
}

}  // namespace detail

// Brute-force maximizer: cyclic pairwise mass exchange on the simplex. For
// each coordinate pair the 1-D move is solved by bisection on the partial
// difference, which is strictly decreasing by concavity; passes repeat until
// no pair moves. Independent of the closed forms it is checked against.
inline Eigen::VectorXd maximize_regularized_objective(const Eigen::VectorXd& q,
                                                      const Eigen::VectorXd& pb, double lambda,
                                                      bool reverse, int grid_resolution = 8) {
  check_lemma1_inputs(q, pb, lambda);
  const int n = int(q.size());
  const int max_passes = std::max(200, 50 * grid_resolution);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (int pass = 0; pass < max_passes; ++pass) {
    double largest_move = 0.0;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        // move mass t from a to b; g(t) decreases as t grows
        auto g = [&](double t) {
          return detail::objective_partial(x(b) + t, q(b), pb(b), lambda, reverse) -
                 detail::objective_partial(x(a) - t, q(a), pb(a), lambda, reverse);
        };
        double lo = -x(b) * (1.0 - 1e-12);
        double hi = x(a) * (1.0 - 1e-12);
        double t;
        if (g(lo) <= 0.0) t = lo;
        else if (g(hi) >= 0.0) t = hi;
        else {
          for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? lo : hi) = mid;
          }
          t = 0.5 * (lo + hi);
        }
        x(a) -= t;
        x(b) += t;
        largest_move = std::max(largest_move, std::abs(t));
      }
    }
    if (largest_move < 1e-14) break;
  }
  return x / x.sum();
}

struct Lemma1Result {
  Eigen::VectorXd forward_closed, forward_brute;
  Eigen::VectorXd reverse_closed, reverse_brute;
  double forward_dev = 0.0;
  double reverse_dev = 0.0;
};

inline Lemma1Result lemma1_check(const Eigen::VectorXd& q, const Eigen::VectorXd& pb,
                                 double lambda, int grid_resolution = 8) {
  Lemma1Result out;
  out.forward_closed = forward_kl_optimum(q, pb, lambda);
  out.reverse_closed = reverse_kl_optimum(q, pb, lambda);
  out.forward_brute = maximize_regularized_objective(q, pb, lambda, false, grid_resolution);
  out.reverse_brute = maximize_regularized_objective(q, pb, lambda, true, grid_resolution);
  out.forward_dev = (out.forward_closed - out.forward_brute).cwiseAbs().maxCoeff();
  out.reverse_dev = (out.reverse_closed - out.reverse_brute).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace cdc
