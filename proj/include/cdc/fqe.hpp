#pragma once

#include "cdc/trainer.hpp"

namespace cdc {

// Fitted Q evaluation of a frozen policy: iterated regression onto the
// mean-over-sampled-actions backup
//   y = r + gamma/N * sum_k q_bar_target(s', a'_k)
// with the optional eta*Delta_j penalty built from actions the frozen policy
// samples at s. eta = 0 is the plain unpenalized variant.
struct OpeConfig {
  double eta = 1.0;
  int n_candidates = 15;
  int ensemble_size = 4;
  double nu = 0.75;
  double gamma = 0.99;
  double tau = 0.005;
  long steps = 50000;
  long batch_size = 256;
  double critic_lr = 7e-4;
  std::uint64_t seed = 0;
  std::vector<int> hidden = default_hidden_layers();
  double grad_clip = 10.0;

  void validate() const {
    if (eta < 0.0) throw ConfigError("eta must be non-negative");
    if (n_candidates < 1) throw ConfigError("n_candidates must be positive");
    if (ensemble_size < 1) throw ConfigError("ensemble_size must be positive");
    if (!(nu > 0.0 && nu < 1.0)) throw ConfigError("nu must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0,1]");
    if (steps < 0 || batch_size < 1) throw ConfigError("bad steps/batch");
    if (critic_lr <= 0.0) throw ConfigError("critic_lr must be positive");
  }
};

inline QEnsemble fqe(const TransitionDataset& data, const GaussianPolicy& policy,
                     const OpeConfig& cfg) {
  cfg.validate();
  const std::uint64_t policy_hash_before = policy.net().parameter_hash();
  Rng init_rng = substream(cfg.seed, "fqe-init");
  QEnsemble ensemble(data.ds, data.da, cfg.ensemble_size, cfg.nu, cfg.hidden, init_rng);
  std::vector<AdamState> adam(static_cast<std::size_t>(cfg.ensemble_size));
  for (int j = 0; j < cfg.ensemble_size; ++j) adam[std::size_t(j)].init_like(ensemble.online()[std::size_t(j)]);
  Rng batch_rng = substream(cfg.seed, "fqe-batch");
  Rng sample_rng = substream(cfg.seed, "fqe-sample");

  const int N = cfg.n_candidates;
  for (long step = 1; step <= cfg.steps; ++step) {
    const Batch batch = sample_minibatch(data, cfg.batch_size, batch_rng);
    const long B = batch.size();
    const MatrixXd cand_s = policy.sample_actions(batch.s, N, sample_rng);
    const MatrixXd cand_s2 = policy.sample_actions(batch.s2, N, sample_rng);

    // mean-over-candidates backup
    Eigen::VectorXd y(B);
    if (cfg.gamma == 0.0) {
      y = batch.r;
    } else {
      const MatrixXd sa2 = expand_sa(batch.s2, cand_s2, N);
      const Eigen::VectorXd qb = ensemble.q_bar_batch(sa2, true);
      for (long i = 0; i < B; ++i) {
        if (batch.terminal[std::size_t(i)] && !batch.truncated[std::size_t(i)]) {
          y(i) = batch.r(i);
          continue;
        }
        double mean = 0.0;
        for (int k = 0; k < N; ++k) mean += qb(i * N + k);
        y(i) = batch.r(i) + cfg.gamma * mean / double(N);
      }
    }

    const MatrixXd sa = concat_sa(batch.s, batch.a);
    const MatrixXd sa_cand = expand_sa(batch.s, cand_s, N);
    for (int j = 0; j < cfg.ensemble_size; ++j) {
      DenseNet& net = ensemble.online()[std::size_t(j)];
      DenseNet::Cache c_sa, c_cand;
      const Eigen::VectorXd qv = net.batch_forward(sa, &c_sa);
      const Eigen::VectorXd qc = net.batch_forward(sa_cand, &c_cand);
      MatrixXd up_sa(B, 1), up_cand = MatrixXd::Zero(B * N, 1);
      double loss = 0.0;
      for (long i = 0; i < B; ++i) {
        long kmax = i * N;
        for (int k = 1; k < N; ++k)
          if (qc(i * N + k) > qc(kmax)) kmax = i * N + k;
        const double eps = qc(kmax) - qv(i);
        const double epos = eps > 0.0 ? eps : 0.0;
        const double resid = qv(i) - y(i);
        loss += resid * resid + cfg.eta * epos * epos;
        up_sa(i, 0) = (2.0 * resid - cfg.eta * 2.0 * epos) / double(B);
        if (epos > 0.0) up_cand(kmax, 0) += cfg.eta * 2.0 * epos / double(B);
      }
      if (!std::isfinite(loss)) throw NumericError("non-finite FQE loss", step, j);
      DenseNet::Grads g;
      g.init_like(net);
      net.batch_backward(c_sa, up_sa, &g);
      if (cfg.eta > 0.0) net.batch_backward(c_cand, up_cand, &g);
      clip_grad_norm(g, cfg.grad_clip);
      adam_step(net, g, adam[std::size_t(j)], cfg.critic_lr);
    }
    ensemble.polyak_update(cfg.tau);
  }
  if (policy.net().parameter_hash() != policy_hash_before)
    throw Error("fqe: evaluated policy changed during fitting");
  return ensemble;
}

// Policy value estimate: mean over initial states of the mean over N
// policy-sampled actions of q_bar. Initial states are the dataset rows with
// the episode_start flag; `all_states` switches to averaging over every row.
inline double ope_score(const QEnsemble& q_hat, const GaussianPolicy& policy,
                        const TransitionDataset& data, int n, Rng& rng,
                        bool all_states = false) {
  if (n < 1) throw Error("ope_score: n must be positive");
  std::vector<long> rows;
  for (long i = 0; i < data.size(); ++i)
    if (all_states || data.episode_start[std::size_t(i)]) rows.push_back(i);
  if (rows.empty()) throw Error("ope_score: dataset has no episode-start states");
  MatrixXd starts(long(rows.size()), data.ds);
  for (long i = 0; i < long(rows.size()); ++i) starts.row(i) = data.states.row(rows[std::size_t(i)]);
  const MatrixXd actions = policy.sample_actions(starts, n, rng);
  const Eigen::VectorXd vals = q_hat.q_bar_batch(expand_sa(starts, actions, n), false);
  return vals.mean();
}

// Sample Pearson correlation; undefined for constant input.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ShapeError("pearson: length mismatch");
  const auto n = long(xs.size());
  if (n < 2) throw Error("pearson: need at least two points");
  double mx = 0, my = 0;
  for (long i = 0; i < n; ++i) {
    mx += xs[std::size_t(i)];
    my += ys[std::size_t(i)];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (long i = 0; i < n; ++i) {
    const double dx = xs[std::size_t(i)] - mx, dy = ys[std::size_t(i)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateReferenceError("pearson: correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

struct OpeReport {
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> estimates;
  std::vector<double> actuals;
  double pearson_r = 0.0;
};

inline constexpr int kOpeActualEpisodes = 20;

// Scores each policy twice (plain FQE and the penalized variant) against the
// actual deployment return, and reports both correlations.
inline std::pair<OpeReport, OpeReport> ope_benchmark(const TransitionDataset& data,
                                                     const PointMassEnv& env,
                                                     const std::vector<Agent>& policies,
                                                     const OpeConfig& base_cfg) {
  if (policies.size() < 2) throw Error("ope_benchmark: need at least two policies");
  // common episode seeds across policies: comparisons share the evaluation
  // noise, and identical policies produce identical actual returns
  std::vector<double> actuals;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    PointMassEnv local = env;
    double total = 0.0;
    for (int e = 0; e < kOpeActualEpisodes; ++e) {
      Rng rng = substream(base_cfg.seed, "ope-actual", std::uint64_t(e));
      total += rollout(
                   local,
                   [&](const Eigen::VectorXd& s, Rng& r) {
                     return policies[p].select(s, base_cfg.n_candidates, r);
                   },
                   local.horizon(), rng)
                   .undiscounted;
    }
    actuals.push_back(total / kOpeActualEpisodes);
  }

  std::pair<OpeReport, OpeReport> out;
  for (int pass = 0; pass < 2; ++pass) {
    OpeReport& report = pass == 0 ? out.first : out.second;
    report.eta = pass == 0 ? 0.0 : base_cfg.eta;
    report.seed = base_cfg.seed;
    report.actuals = actuals;
    for (std::size_t p = 0; p < policies.size(); ++p) {
      OpeConfig cfg = base_cfg;
      cfg.eta = report.eta;
      cfg.seed = substream_seed(base_cfg.seed, "ope-fqe", (std::uint64_t(p) << 1) + std::uint64_t(pass));
      const QEnsemble q_hat = fqe(data, policies[p].policy, cfg);
      Rng score_rng = substream(base_cfg.seed, "ope-score", (std::uint64_t(p) << 1) + std::uint64_t(pass));
      report.estimates.push_back(
          ope_score(q_hat, policies[p].policy, data, cfg.n_candidates, score_rng));
    }
    report.pearson_r = pearson(report.estimates, report.actuals);
  }
  return out;
}

}  // namespace cdc
