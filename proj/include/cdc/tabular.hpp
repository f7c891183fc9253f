#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "cdc/common.hpp"
#include "cdc/rng.hpp"

namespace cdc {

// Finite MDP for operator-level verification. transitions row (s*na + a)
// holds T(s, a, .), each row summing to 1.
struct TabularMdp {
  int ns = 0;
  int na = 0;
  Eigen::MatrixXd transitions;  // (ns*na) x ns
  Eigen::MatrixXd rewards;      // ns x na
  double gamma = 0.99;
  double r_star = 1.0;

  void validate() const {
    if (ns < 1 || na < 1) throw ShapeError("TabularMdp: need ns, na >= 1");
    if (transitions.rows() != long(ns) * na || transitions.cols() != ns)
      throw ShapeError("TabularMdp: transition tensor shape mismatch");
    for (long i = 0; i < transitions.rows(); ++i) {
      if ((transitions.row(i).array() < 0.0).any())
        throw Error("TabularMdp: negative transition probability");
      if (std::abs(transitions.row(i).sum() - 1.0) > 1e-12)
        throw Error("TabularMdp: transition row does not sum to 1");
    }
    if (rewards.rows() != ns || rewards.cols() != na)
      throw ShapeError("TabularMdp: reward table shape mismatch");
    if ((rewards.array().abs() > r_star + 1e-12).any())
      throw Error("TabularMdp: reward exceeds the r* bound");
  }
};

inline TabularMdp random_mdp(int ns, int na, double gamma, Rng& rng, double r_star = 1.0) {
  TabularMdp m;
  m.ns = ns;
  m.na = na;
  m.gamma = gamma;
  m.r_star = r_star;
  m.transitions.resize(long(ns) * na, ns);
  for (long i = 0; i < m.transitions.rows(); ++i) {
    double total = 0.0;
    for (int s2 = 0; s2 < ns; ++s2) {
      const double w = rng.uniform(1e-3, 1.0);
      m.transitions(i, s2) = w;
      total += w;
    }
    m.transitions.row(i) /= total;
  }
  m.rewards.resize(ns, na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) m.rewards(s, a) = rng.uniform(-r_star, r_star);
  return m;
}

// One Bellman-optimality backup; the oracle the operator is checked against.
inline Eigen::MatrixXd bellman_optimality_backup(const TabularMdp& m, const Eigen::MatrixXd& q) {
  Eigen::VectorXd vmax(m.ns);
  for (int s = 0; s < m.ns; ++s) vmax(s) = q.row(s).maxCoeff();
  Eigen::MatrixXd out(m.ns, m.na);
  for (int s = 0; s < m.ns; ++s)
    for (int a = 0; a < m.na; ++a)
      out(s, a) = m.rewards(s, a) + m.gamma * m.transitions.row(long(s) * m.na + a).dot(vmax);
  return out;
}

// Exact minimizer over one state's action values of
//   sum_a (q_a - y_a)^2 + eta * sum_a (max_c q_c - q_a)^2.
// At the optimum the actions split into a tied top group S at value mstar
// (those with y_a >= mstar) and free actions pulled toward mstar:
//   q_a = (y_a + eta*mstar) / (1 + eta).
// mstar is a convex combination of the y values, so the map is sup-norm
// nonexpansive, which is what keeps the full operator a gamma-contraction.
inline Eigen::VectorXd penalized_regression_state(const Eigen::VectorXd& y, double eta) {
  const int na = int(y.size());
  if (eta == 0.0 || na == 1) return y;
  std::vector<int> order(static_cast<std::size_t>(na));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return y(a) > y(b); });
  const double beta = eta / (1.0 + eta);
  const double total = y.sum();
  double top_sum = 0.0;
  double mstar = y(order[0]);
  for (int t = 1; t <= na; ++t) {
    top_sum += y(order[std::size_t(t) - 1]);
    const double m = (top_sum + beta * (total - top_sum)) / (double(t) + beta * double(na - t));
    const bool in_ok = y(order[std::size_t(t) - 1]) >= m - 1e-12;
    const bool out_ok = (t == na) || (y(order[std::size_t(t)]) <= m + 1e-12);
    if (in_ok && out_ok) {
      mstar = m;
      break;
    }
  }
  Eigen::VectorXd q(na);
  for (int a = 0; a < na; ++a)
    q(a) = y(a) >= mstar ? mstar : (y(a) + eta * mstar) / (1.0 + eta);
  // guard against drift past the tied group
  for (int a = 0; a < na; ++a) q(a) = std::min(q(a), mstar);
  return q;
}

// Candidate actions at a state: top-n actions ranked by the regularized
// softmax policy pi(a) proportional to exp(qbar/lambda) (greedy for
// lambda = 0), ties toward the lowest index. Softmax ordering follows the
// value ordering, so the set always contains an argmax of qbar.
inline std::vector<int> candidate_actions(const Eigen::RowVectorXd& qbar_row, int n,
                                          double lambda) {
  const int na = int(qbar_row.size());
  const int take = std::min(n, na);
  std::vector<int> order(static_cast<std::size_t>(na));
  std::iota(order.begin(), order.end(), 0);
  // exp(q/lambda) is strictly increasing in q for lambda > 0, and the greedy
  // lambda = 0 limit orders by value as well
  (void)lambda;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return qbar_row(a) > qbar_row(b); });
  order.resize(std::size_t(take));
  return order;
}

// One exact iteration of the coupled value/policy update on tables. The M
// ensemble members all solve the same exact regression, so their convex
// combination equals the common solution; the backup max runs over the
// candidate set, the penalty over the full action support.
inline Eigen::MatrixXd cdc_operator_tabular(const TabularMdp& m, const Eigen::MatrixXd& qbar,
                                            double eta, double lambda, int n_candidates,
                                            double nu, int ensemble_size) {
  if (qbar.rows() != m.ns || qbar.cols() != m.na)
    throw ShapeError("cdc_operator_tabular: table shape mismatch");
  if (!qbar.allFinite()) throw NumericError("cdc_operator_tabular: non-finite table");
  if (n_candidates < 1) throw Error("cdc_operator_tabular: n_candidates must be positive");
  if (ensemble_size < 1) throw Error("cdc_operator_tabular: ensemble_size must be positive");
  (void)nu;  // members coincide after the exact solve, so the combination is the identity

  // EMaQ-style backup value per next state over its candidate set
  Eigen::VectorXd vnext(m.ns);
  for (int s = 0; s < m.ns; ++s) {
    const auto cand = candidate_actions(qbar.row(s), n_candidates, lambda);
    double best = qbar(s, cand[0]);
    for (int a : cand) best = std::max(best, qbar(s, a));
    vnext(s) = best;
  }

  Eigen::MatrixXd next(m.ns, m.na);
  for (int s = 0; s < m.ns; ++s) {
    Eigen::VectorXd y(m.na);
    for (int a = 0; a < m.na; ++a)
      y(a) = m.rewards(s, a) + m.gamma * m.transitions.row(long(s) * m.na + a).dot(vnext);
    next.row(s) = penalized_regression_state(y, eta).transpose();
  }
  return next;
}

struct ContractionParams {
  double eta = 0.0;
  double lambda = 0.0;
  int n_candidates = 0;  // 0 means |A|
  double nu = 0.75;
  int ensemble_size = 4;
};

// Max over random table pairs of ||T(Q1) - T(Q2)||_inf / ||Q1 - Q2||_inf.
inline double contraction_check(const TabularMdp& m, int trials, Rng& rng,
                                const ContractionParams& p = {}) {
  if (trials < 1) throw Error("contraction_check: trials must be positive");
  const int n = p.n_candidates > 0 ? p.n_candidates : m.na;
  const double scale = m.r_star / std::max(1e-9, 1.0 - m.gamma);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXd q1(m.ns, m.na), q2(m.ns, m.na);
    for (int s = 0; s < m.ns; ++s)
      for (int a = 0; a < m.na; ++a) {
        q1(s, a) = rng.uniform(-scale, scale);
        q2(s, a) = rng.uniform(-scale, scale);
      }
    const double d = (q1 - q2).cwiseAbs().maxCoeff();
    if (d == 0.0) continue;
    const Eigen::MatrixXd t1 = cdc_operator_tabular(m, q1, p.eta, p.lambda, n, p.nu, p.ensemble_size);
    const Eigen::MatrixXd t2 = cdc_operator_tabular(m, q2, p.eta, p.lambda, n, p.nu, p.ensemble_size);
    worst = std::max(worst, (t1 - t2).cwiseAbs().maxCoeff() / d);
  }
  return worst;
}

}  // namespace cdc
