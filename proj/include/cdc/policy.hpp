#pragma once

#include <cmath>
#include <numbers>

#include "cdc/net.hpp"

namespace cdc {

// Tanh-squashed diagonal Gaussian over [-1,1]^da. The net maps state to
// [mean | log_std]; log_std is clamped to [-5, 2]. Densities are exact:
//   log pi(a|s) = log N(atanh(a); mean, sigma) - sum_d log(1 - a_d^2)
// with dataset actions clamped to |a| <= 1 - 1e-6 before atanh so boundary
// demonstrations keep finite likelihood.
class GaussianPolicy {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;
  static constexpr double kAtanhClamp = 1.0 - 1e-6;
  static constexpr double kSampleClamp = 1.0 - 1e-12;

  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng)
      : net_(make_layer_sizes(state_dim, hidden, 2 * action_dim), rng), da_(action_dim) {}
  GaussianPolicy(DenseNet net, int action_dim) : net_(std::move(net)), da_(action_dim) {
    if (net_.output_dim() != 2 * da_) throw ShapeError("policy net must output 2*da values");
  }

  int state_dim() const { return net_.input_dim(); }
  int action_dim() const { return da_; }
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

  // Forward pass split into the distribution heads, plus the cache needed to
  // push gradients back through the net.
  struct Heads {
    MatrixXd mean;     // B x da
    MatrixXd log_std;  // clamped
    MatrixXd sigma;
    // 1 where the raw log-std was inside the clamp range (gradient passes)
    MatrixXd active;
    DenseNet::Cache cache;
    long rows() const { return mean.rows(); }
  };

  Heads heads(const MatrixXd& states) const {
    Heads h;
    MatrixXd out = net_.batch_forward(states, &h.cache);
    h.mean = out.leftCols(da_);
    MatrixXd raw = out.rightCols(da_);
    h.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    h.active = ((raw.array() > kLogStdMin) && (raw.array() < kLogStdMax)).cast<double>();
    h.sigma = h.log_std.array().exp();
    return h;
  }

  // n reparameterized samples per head row: a = tanh(mean + sigma * eps).
  // Rows are state-major: sample k of state i lives at row i*n + k. The
  // pre-squash noise is retained for gradient propagation.
  struct Samples {
    MatrixXd actions;  // (B*n) x da, strictly inside (-1, 1)
    MatrixXd noises;
    int per_state = 1;
  };

  Samples sample(const Heads& h, int n, Rng& rng) const {
    if (n < 1) throw Error("policy sample: n must be positive");
    const long B = h.rows();
    Samples s;
    s.per_state = n;
    s.actions.resize(B * n, da_);
    s.noises.resize(B * n, da_);
    for (long i = 0; i < B; ++i) {
      for (int k = 0; k < n; ++k) {
        const long row = i * n + k;
        for (int d = 0; d < da_; ++d) {
          const double eps = rng.normal();
          const double u = h.mean(i, d) + h.sigma(i, d) * eps;
          s.noises(row, d) = eps;
          s.actions(row, d) = std::clamp(std::tanh(u), -kSampleClamp, kSampleClamp);
        }
      }
    }
    return s;
  }

  MatrixXd sample_actions(const MatrixXd& states, int n, Rng& rng) const {
    return sample(heads(states), n, rng).actions;
  }

  Eigen::VectorXd sample_one(const Eigen::VectorXd& state, Rng& rng) const {
    return sample_actions(state.transpose(), 1, rng).row(0).transpose();
  }

  // Exact log-density of `actions` (one row per head row).
  Eigen::VectorXd log_prob(const Heads& h, const MatrixXd& actions) const {
    if (actions.rows() != h.rows() || actions.cols() != da_)
      throw ShapeError("log_prob: action block shape mismatch");
    const double c = -0.5 * std::log(2.0 * std::numbers::pi);
    Eigen::VectorXd lp = Eigen::VectorXd::Zero(actions.rows());
    for (long i = 0; i < actions.rows(); ++i) {
      for (int d = 0; d < da_; ++d) {
        const double a = std::clamp(actions(i, d), -kAtanhClamp, kAtanhClamp);
        const double u = std::atanh(a);
        const double z = (u - h.mean(i, d)) / h.sigma(i, d);
        lp(i) += c - h.log_std(i, d) - 0.5 * z * z - std::log(1.0 - a * a);
      }
    }
    return lp;
  }

  double log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const {
    return log_prob(heads(state.transpose()), action.transpose())(0);
  }

  // Accumulates d/dphi of sum_i w_i * log pi(a_i | s_i) into `grads`.
  void log_prob_backward(const Heads& h, const MatrixXd& actions,
                         const Eigen::VectorXd& weights, DenseNet::Grads* grads) const {
    const long B = h.rows();
    MatrixXd upstream = MatrixXd::Zero(B, 2 * da_);
    for (long i = 0; i < B; ++i) {
      for (int d = 0; d < da_; ++d) {
        const double a = std::clamp(actions(i, d), -kAtanhClamp, kAtanhClamp);
        const double u = std::atanh(a);
        const double z = (u - h.mean(i, d)) / h.sigma(i, d);
        upstream(i, d) = weights(i) * z / h.sigma(i, d);
        upstream(i, da_ + d) = weights(i) * (z * z - 1.0) * h.active(i, d);
      }
    }
    net_.batch_backward(h.cache, upstream, grads);
  }

  // Accumulates d/dphi of sum_i <action_grads_i, a_i> for reparameterized
  // samples a = tanh(mean + sigma*eps); gradient flows through the transform.
  // `action_grads` has one row per sample row.
  void reparam_backward(const Heads& h, const Samples& s, const MatrixXd& action_grads,
                        DenseNet::Grads* grads) const {
    const long B = h.rows();
    const int n = s.per_state;
    if (action_grads.rows() != B * n) throw ShapeError("reparam_backward: row mismatch");
    MatrixXd upstream = MatrixXd::Zero(B, 2 * da_);
    for (long i = 0; i < B; ++i) {
      for (int k = 0; k < n; ++k) {
        const long row = i * n + k;
        for (int d = 0; d < da_; ++d) {
          const double a = s.actions(row, d);
          const double dtanh = 1.0 - a * a;
          const double g = action_grads(row, d) * dtanh;
          upstream(i, d) += g;
          upstream(i, da_ + d) += g * h.sigma(i, d) * s.noises(row, d) * h.active(i, d);
        }
      }
    }
    net_.batch_backward(h.cache, upstream, grads);
  }

 private:
  DenseNet net_;
  int da_ = 0;
};

}  // namespace cdc
