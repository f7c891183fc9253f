#pragma once

#include <functional>

#include "cdc/net.hpp"
#include "cdc/policy.hpp"

namespace cdc {

inline MatrixXd concat_sa(const MatrixXd& states, const MatrixXd& actions) {
  if (states.rows() != actions.rows()) throw ShapeError("concat_sa: row mismatch");
  MatrixXd sa(states.rows(), states.cols() + actions.cols());
  sa << states, actions;
  return sa;
}

// M critics (s,a) -> value with matching target copies and the nu-convex
// point estimate q_bar = nu*min_j + (1-nu)*max_j. Ensemble members differ
// only in weight initialization.
class QEnsemble {
 public:
  QEnsemble() = default;
  QEnsemble(int state_dim, int action_dim, int ensemble_size, double nu,
            const std::vector<int>& hidden, Rng& rng)
      : nu_(nu) {
    if (ensemble_size < 1) throw Error("QEnsemble: ensemble size must be >= 1");
    if (!(nu >= 0.0 && nu <= 1.0)) throw Error("QEnsemble: nu must lie in [0,1]");
    const auto sizes = make_layer_sizes(state_dim + action_dim, hidden, 1);
    online_.reserve(std::size_t(ensemble_size));
    for (int j = 0; j < ensemble_size; ++j) online_.emplace_back(sizes, rng);
    target_ = online_;
  }

  int size() const { return int(online_.size()); }
  double nu() const { return nu_; }
  void set_nu(double nu) { nu_ = nu; }
  std::vector<DenseNet>& online() { return online_; }
  std::vector<DenseNet>& target() { return target_; }
  const std::vector<DenseNet>& online() const { return online_; }
  const std::vector<DenseNet>& target() const { return target_; }

  // Per-member values for a block of (s,a) rows: result is rows x M.
  MatrixXd member_values(const MatrixXd& sa, bool use_target) const {
    const auto& nets = use_target ? target_ : online_;
    MatrixXd vals(sa.rows(), size());
    for (int j = 0; j < size(); ++j) vals.col(j) = nets[std::size_t(j)].batch_forward(sa);
    return vals;
  }

  static double combine(const Eigen::RowVectorXd& member_row, double nu) {
    return nu * member_row.minCoeff() + (1.0 - nu) * member_row.maxCoeff();
  }

  Eigen::VectorXd q_bar_batch(const MatrixXd& sa, bool use_target) const {
    const MatrixXd vals = member_values(sa, use_target);
    Eigen::VectorXd out(vals.rows());
    for (long i = 0; i < vals.rows(); ++i) out(i) = combine(vals.row(i), nu_);
    return out;
  }

  double q_bar(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
               bool use_target = false) const {
    MatrixXd sa(1, s.size() + a.size());
    sa << s.transpose(), a.transpose();
    return q_bar_batch(sa, use_target)(0);
  }

  // q_bar evaluation that keeps what the backward pass needs. Ties in the
  // min/max break toward the lowest member index.
  struct QbarEval {
    Eigen::VectorXd value;
    MatrixXd member_vals;
    std::vector<int> jmin, jmax;
    std::vector<DenseNet::Cache> caches;
  };

  QbarEval q_bar_eval(const MatrixXd& sa, bool use_target) const {
    const auto& nets = use_target ? target_ : online_;
    QbarEval e;
    e.member_vals.resize(sa.rows(), size());
    e.caches.resize(std::size_t(size()));
    for (int j = 0; j < size(); ++j)
      e.member_vals.col(j) = nets[std::size_t(j)].batch_forward(sa, &e.caches[std::size_t(j)]);
    e.value.resize(sa.rows());
    e.jmin.resize(std::size_t(sa.rows()));
    e.jmax.resize(std::size_t(sa.rows()));
    for (long i = 0; i < sa.rows(); ++i) {
      int jmin = 0, jmax = 0;
      for (int j = 1; j < size(); ++j) {
        if (e.member_vals(i, j) < e.member_vals(i, jmin)) jmin = j;
        if (e.member_vals(i, j) > e.member_vals(i, jmax)) jmax = j;
      }
      e.jmin[std::size_t(i)] = jmin;
      e.jmax[std::size_t(i)] = jmax;
      e.value(i) = nu_ * e.member_vals(i, jmin) + (1.0 - nu_) * e.member_vals(i, jmax);
    }
    return e;
  }

  // d/d(sa) of sum_i w_i * q_bar(sa_i), differentiating through the min/max
  // member choice. Critic parameters are left untouched.
  MatrixXd q_bar_input_grads(const QbarEval& e, const Eigen::VectorXd& weights,
                             bool use_target) const {
    const auto& nets = use_target ? target_ : online_;
    const long B = e.value.size();
    MatrixXd total;
    for (int j = 0; j < size(); ++j) {
      MatrixXd upstream = MatrixXd::Zero(B, 1);
      bool any = false;
      for (long i = 0; i < B; ++i) {
        double w = 0.0;
        if (e.jmin[std::size_t(i)] == j) w += nu_ * weights(i);
        if (e.jmax[std::size_t(i)] == j) w += (1.0 - nu_) * weights(i);
        if (w != 0.0) {
          upstream(i, 0) = w;
          any = true;
        }
      }
      if (!any) continue;
      MatrixXd input_grads;
      nets[std::size_t(j)].batch_backward(e.caches[std::size_t(j)], upstream, nullptr,
                                          &input_grads);
      if (total.size() == 0) total = std::move(input_grads);
      else total += input_grads;
    }
    if (total.size() == 0) total = MatrixXd::Zero(B, nets[0].input_dim());
    return total;
  }

  // theta' <- tau*theta + (1-tau)*theta'
  void polyak_update(double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error("polyak_update: tau must lie in [0,1]");
    for (int j = 0; j < size(); ++j) {
      for (int l = 0; l < online_[std::size_t(j)].n_layers(); ++l) {
        target_[std::size_t(j)].weights()[l] =
            tau * online_[std::size_t(j)].weights()[l] +
            (1.0 - tau) * target_[std::size_t(j)].weights()[l];
        target_[std::size_t(j)].biases()[l] =
            tau * online_[std::size_t(j)].biases()[l] +
            (1.0 - tau) * target_[std::size_t(j)].biases()[l];
      }
    }
  }

  std::uint64_t online_hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& n : online_) {
      const std::uint64_t ph = n.parameter_hash();
      h = fnv1a64(&ph, sizeof(ph), h);
    }
    return h;
  }

  std::uint64_t target_hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& n : target_) {
      const std::uint64_t ph = n.parameter_hash();
      h = fnv1a64(&ph, sizeof(ph), h);
    }
    return h;
  }

 private:
  std::vector<DenseNet> online_;
  std::vector<DenseNet> target_;
  double nu_ = 0.75;
};

// Candidate scorer used at deployment: rows of `sa` are (state, action)
// pairs for one state, result is one score per row.
using CandidateScorer = std::function<Eigen::VectorXd(const MatrixXd& sa)>;

// Deployment-time action selection: sample N candidates from the policy and
// return the one the scorer ranks highest (ties -> lowest sample index).
inline Eigen::VectorXd select_action(const GaussianPolicy& policy, const CandidateScorer& score,
                                     const Eigen::VectorXd& state, int n_candidates, Rng& rng) {
  if (n_candidates < 1) throw Error("select_action: need at least one candidate");
  const MatrixXd actions = policy.sample_actions(state.transpose(), n_candidates, rng);
  MatrixXd sa(n_candidates, state.size() + actions.cols());
  for (int k = 0; k < n_candidates; ++k) {
    sa.row(k) << state.transpose(), actions.row(k);
  }
  const Eigen::VectorXd scores = score(sa);
  int best = 0;
  for (int k = 1; k < n_candidates; ++k)
    if (scores(k) > scores(best)) best = k;
  return actions.row(best).transpose();
}

// Default deployment selection: online ensemble with the training nu.
inline Eigen::VectorXd select_action(const GaussianPolicy& policy, const QEnsemble& ensemble,
                                     const Eigen::VectorXd& state, int n_candidates, Rng& rng) {
  return select_action(
      policy, [&](const MatrixXd& sa) { return ensemble.q_bar_batch(sa, false); }, state,
      n_candidates, rng);
}

}  // namespace cdc
