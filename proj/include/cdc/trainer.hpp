#pragma once

#include <optional>

#include "cdc/adam.hpp"
#include "cdc/agent.hpp"
#include "cdc/dataset.hpp"
#include "cdc/env.hpp"

namespace cdc {

// Every scalar of the training loop. Defaults follow the shipped
// hyperparameter set; eta/lambda are per-run choices.
struct CdcConfig {
  double eta = 0.0;     // extra-overestimation penalty coefficient
  double lambda = 0.0;  // exploration-penalty coefficient
  double nu = 0.75;
  int n_candidates = 15;  // N, sampled actions per state
  int ensemble_size = 4;  // M
  double gamma = 0.99;
  double tau = 0.005;
  long batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 7e-4;
  long total_steps = 0;
  std::uint64_t seed = 0;
  std::vector<int> hidden = default_hidden_layers();
  long log_interval = 100;
  long eval_interval = 1000;
  int eval_episodes = 10;
  double grad_clip = 10.0;

  void validate() const {
    if (eta < 0.0) throw ConfigError("eta must be non-negative");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (!(nu > 0.0 && nu < 1.0)) throw ConfigError("nu must lie in (0,1)");
    if (n_candidates < 1) throw ConfigError("n_candidates must be positive");
    if (ensemble_size < 1) throw ConfigError("ensemble_size must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (actor_lr <= 0.0 || critic_lr <= 0.0) throw ConfigError("learning rates must be positive");
    if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
    if (log_interval < 1 || eval_interval < 1) throw ConfigError("intervals must be positive");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden sizes must be positive");
  }
};

struct TrainRecord {
  long step = 0;
  double td_loss = 0.0;
  double delta_penalty = 0.0;
  double policy_obj = 0.0;
  double mean_q = 0.0;
  double max_q = 0.0;  // max over batch and ensemble of |Q_j(s,a)|
  double mean_logpi = 0.0;
  double eval_return = 0.0;
};

// ([max_k Q(s, a_k) - Q(s, a)]_+)^2 for one state. Candidates are rows.
inline double delta_penalty(const DenseNet& q, const Eigen::VectorXd& s,
                            const Eigen::VectorXd& a, const MatrixXd& candidate_actions) {
  if (candidate_actions.rows() < 1) throw Error("delta_penalty: no candidate actions");
  MatrixXd sa(1 + candidate_actions.rows(), s.size() + a.size());
  sa.row(0) << s.transpose(), a.transpose();
  for (long k = 0; k < candidate_actions.rows(); ++k)
    sa.row(k + 1) << s.transpose(), candidate_actions.row(k);
  const Eigen::VectorXd vals = q.batch_forward(sa);
  const double eps = vals.tail(candidate_actions.rows()).maxCoeff() - vals(0);
  return eps > 0.0 ? eps * eps : 0.0;
}

// Exact gradient of delta_penalty with respect to the critic parameters:
// 2*eps * (grad Q(s, a*) - grad Q(s, a)) where eps > 0, zero otherwise.
inline DenseNet::Grads delta_penalty_grads(const DenseNet& q, const Eigen::VectorXd& s,
                                           const Eigen::VectorXd& a,
                                           const MatrixXd& candidate_actions) {
  const long N = candidate_actions.rows();
  MatrixXd sa(1 + N, s.size() + a.size());
  sa.row(0) << s.transpose(), a.transpose();
  for (long k = 0; k < N; ++k) sa.row(k + 1) << s.transpose(), candidate_actions.row(k);
  DenseNet::Cache cache;
  const Eigen::VectorXd vals = q.batch_forward(sa, &cache);
  long kmax = 0;
  for (long k = 1; k < N; ++k)
    if (vals(k + 1) > vals(kmax + 1)) kmax = k;
  const double eps = vals(kmax + 1) - vals(0);
  DenseNet::Grads g;
  g.init_like(q);
  if (eps > 0.0) {
    MatrixXd upstream = MatrixXd::Zero(1 + N, 1);
    upstream(0, 0) = -2.0 * eps;
    upstream(kmax + 1, 0) = 2.0 * eps;
    q.batch_backward(cache, upstream, &g);
  }
  return g;
}

// Expanded (state, candidate-action) rows: row i*N + k pairs state i with its
// k-th candidate.
inline MatrixXd expand_sa(const MatrixXd& states, const MatrixXd& candidate_actions, int n) {
  const long B = states.rows();
  MatrixXd sa(B * n, states.cols() + candidate_actions.cols());
  for (long i = 0; i < B; ++i)
    for (int k = 0; k < n; ++k)
      sa.row(i * n + k) << states.row(i), candidate_actions.row(i * n + k);
  return sa;
}

// y_i = r_i + gamma * max_k q_bar_target(s'_i, a'_k), with y_i = r_i for
// terminal (not truncated) transitions. Targets carry no gradient.
inline Eigen::VectorXd emaq_targets(const Batch& batch, const QEnsemble& ensemble,
                                    const MatrixXd& next_candidates, int n, double gamma) {
  const long B = batch.size();
  Eigen::VectorXd y(B);
  if (gamma == 0.0) {
    y = batch.r;
    return y;
  }
  const MatrixXd sa2 = expand_sa(batch.s2, next_candidates, n);
  const Eigen::VectorXd qb = ensemble.q_bar_batch(sa2, /*use_target=*/true);
  for (long i = 0; i < B; ++i) {
    if (batch.terminal[std::size_t(i)] && !batch.truncated[std::size_t(i)]) {
      y(i) = batch.r(i);
      continue;
    }
    double best = qb(i * n);
    for (int k = 1; k < n; ++k) best = std::max(best, qb(i * n + k));
    y(i) = batch.r(i) + gamma * best;
  }
  return y;
}

// Convenience form that samples the next-state candidates itself.
inline Eigen::VectorXd emaq_targets(const Batch& batch, const QEnsemble& ensemble,
                                    const GaussianPolicy& policy, double gamma, int n,
                                    Rng& rng) {
  const MatrixXd cand = policy.sample_actions(batch.s2, n, rng);
  return emaq_targets(batch, ensemble, cand, n, gamma);
}

struct ValueStats {
  double td_loss = 0.0;
  double delta_penalty = 0.0;
  double mean_q = 0.0;
  double max_abs_q = 0.0;
};

struct PolicyStats {
  double policy_obj = 0.0;
  double mean_logpi = 0.0;
};

// The trainer owns the agent, the optimizer states and the RNG substreams.
// Per-step randomness is consumed in a fixed documented order so seeded runs
// are bit-reproducible:
//   1. batch indices                 ("batch" stream)
//   2. N candidate actions at s      ("policy-sample" stream)
//   3. N candidate actions at s'     ("policy-sample" stream, continued)
//   4. one fresh reparameterized action per state for the policy update
//      ("policy-sample" stream, continued)
class CdcTrainer {
 public:
  CdcTrainer(CdcConfig cfg, int state_dim, int action_dim)
      : cfg_(std::move(cfg)),
        agent_(make_agent(state_dim, action_dim, cfg_.ensemble_size, cfg_.nu, cfg_.hidden,
                          cfg_.seed)),
        batch_rng_(substream(cfg_.seed, "batch")),
        sample_rng_(substream(cfg_.seed, "policy-sample")) {
    cfg_.validate();
    critic_adam_.resize(std::size_t(cfg_.ensemble_size));
    for (int j = 0; j < cfg_.ensemble_size; ++j)
      critic_adam_[std::size_t(j)].init_like(agent_.critics.online()[std::size_t(j)]);
    policy_adam_.init_like(agent_.policy.net());
  }

  const CdcConfig& config() const { return cfg_; }
  Agent& agent() { return agent_; }
  const Agent& agent() const { return agent_; }
  long steps_done() const { return steps_done_; }

  // One Adam step per ensemble member on mean[(Q_j - y)^2 + eta*Delta_j].
  // The candidate set is shared by all members; policy parameters are never
  // touched.
  ValueStats value_update(const Batch& batch, const MatrixXd& s_candidates,
                          const Eigen::VectorXd& y) {
    const long B = batch.size();
    const int N = cfg_.n_candidates;
    const MatrixXd sa = concat_sa(batch.s, batch.a);
    const MatrixXd sa_cand = expand_sa(batch.s, s_candidates, N);
    ValueStats stats;
    stats.max_abs_q = 0.0;
    for (int j = 0; j < cfg_.ensemble_size; ++j) {
      DenseNet& net = agent_.critics.online()[std::size_t(j)];
      DenseNet::Cache c_sa, c_cand;
      const Eigen::VectorXd qv = net.batch_forward(sa, &c_sa);
      const Eigen::VectorXd qc = net.batch_forward(sa_cand, &c_cand);

      MatrixXd up_sa(B, 1), up_cand = MatrixXd::Zero(B * N, 1);
      double td = 0.0, dp = 0.0;
      for (long i = 0; i < B; ++i) {
        long kmax = i * N;
        for (int k = 1; k < N; ++k)
          if (qc(i * N + k) > qc(kmax)) kmax = i * N + k;
        const double eps = qc(kmax) - qv(i);
        const double epos = eps > 0.0 ? eps : 0.0;
        const double resid = qv(i) - y(i);
        td += resid * resid;
        dp += epos * epos;
        up_sa(i, 0) = (2.0 * resid - cfg_.eta * 2.0 * epos) / double(B);
        if (epos > 0.0) up_cand(kmax, 0) += cfg_.eta * 2.0 * epos / double(B);
      }
      td /= double(B);
      dp /= double(B);
      const double loss = td + cfg_.eta * dp;
      if (!std::isfinite(loss)) throw NumericError("non-finite value loss", steps_done_, j);

      DenseNet::Grads g;
      g.init_like(net);
      net.batch_backward(c_sa, up_sa, &g);
      if (cfg_.eta > 0.0) net.batch_backward(c_cand, up_cand, &g);
      clip_grad_norm(g, cfg_.grad_clip);
      adam_step(net, g, critic_adam_[std::size_t(j)], cfg_.critic_lr);

      stats.td_loss += td;
      stats.delta_penalty += dp;
      stats.mean_q += qv.mean();
      stats.max_abs_q = std::max(stats.max_abs_q, qv.cwiseAbs().maxCoeff());
    }
    stats.td_loss /= cfg_.ensemble_size;
    stats.delta_penalty /= cfg_.ensemble_size;
    stats.mean_q /= cfg_.ensemble_size;
    return stats;
  }

  // One Adam ascent step on mean[q_bar(s, a_hat) + lambda*log pi(a|s)] with
  // a_hat reparameterized; critic parameters are treated as constants.
  PolicyStats policy_update(const Batch& batch, Rng& rng) {
    const long B = batch.size();
    const auto heads = agent_.policy.heads(batch.s);
    const auto samples = agent_.policy.sample(heads, 1, rng);
    const MatrixXd sa_pi = concat_sa(batch.s, samples.actions);
    const auto qeval = agent_.critics.q_bar_eval(sa_pi, /*use_target=*/false);
    const Eigen::VectorXd logpi = agent_.policy.log_prob(heads, batch.a);

    PolicyStats stats;
    stats.mean_logpi = logpi.mean();
    stats.policy_obj = qeval.value.mean() + cfg_.lambda * stats.mean_logpi;
    if (!std::isfinite(stats.policy_obj))
      throw NumericError("non-finite policy objective", steps_done_);

    const Eigen::VectorXd w = Eigen::VectorXd::Constant(B, 1.0 / double(B));
    const MatrixXd in_grads = agent_.critics.q_bar_input_grads(qeval, w, false);
    const MatrixXd action_grads = in_grads.rightCols(agent_.action_dim);

    DenseNet::Grads g;
    g.init_like(agent_.policy.net());
    agent_.policy.reparam_backward(heads, samples, action_grads, &g);
    if (cfg_.lambda > 0.0)
      agent_.policy.log_prob_backward(heads, batch.a, cfg_.lambda * w, &g);
    g.scale(-1.0);  // ascent
    clip_grad_norm(g, cfg_.grad_clip);
    adam_step(agent_.policy.net(), g, policy_adam_, cfg_.actor_lr);
    return stats;
  }

  // One full iteration: batch, candidate sets, value update, policy update,
  // Polyak update.
  std::pair<ValueStats, PolicyStats> step(const TransitionDataset& data) {
    const Batch batch = sample_minibatch(data, cfg_.batch_size, batch_rng_);
    const MatrixXd cand_s = agent_.policy.sample_actions(batch.s, cfg_.n_candidates, sample_rng_);
    const MatrixXd cand_s2 =
        agent_.policy.sample_actions(batch.s2, cfg_.n_candidates, sample_rng_);
    const Eigen::VectorXd y =
        emaq_targets(batch, agent_.critics, cand_s2, cfg_.n_candidates, cfg_.gamma);
    auto vstats = value_update(batch, cand_s, y);
    auto pstats = policy_update(batch, sample_rng_);
    agent_.critics.polyak_update(cfg_.tau);
    ++steps_done_;
    return {vstats, pstats};
  }

 private:
  CdcConfig cfg_;
  Agent agent_;
  std::vector<AdamState> critic_adam_;
  AdamState policy_adam_;
  Rng batch_rng_;
  Rng sample_rng_;
  long steps_done_ = 0;
};

// Mean undiscounted return of `episodes` seeded deployment rollouts.
inline double evaluate_agent(const Agent& agent, const PointMassEnv& env, int episodes,
                             int n_candidates, std::uint64_t seed, std::uint64_t round) {
  double total = 0.0;
  PointMassEnv local = env;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = substream(seed, "eval", (round << 20) + std::uint64_t(e));
    total += rollout(
                 local,
                 [&](const Eigen::VectorXd& s, Rng& r) { return agent.select(s, n_candidates, r); },
                 local.horizon(), rng)
                 .undiscounted;
  }
  return total / episodes;
}

struct TrainResult {
  Agent agent;
  std::vector<TrainRecord> records;
};

// Full training loop. Evaluation runs at step 0 and every eval_interval steps
// when an environment is supplied; records are emitted every log_interval
// steps, carrying the latest evaluation value. Numeric failures propagate
// with the failing step index after `on_record` has seen every complete row.
inline TrainResult train(const CdcConfig& cfg, const TransitionDataset& data,
                         const PointMassEnv* eval_env = nullptr,
                         const std::function<void(const TrainRecord&)>& on_record = {}) {
  cfg.validate();
  if (data.size() < 1) throw Error("train: empty dataset");
  CdcTrainer trainer(cfg, data.ds, data.da);
  TrainResult out;
  double last_eval = 0.0;
  if (eval_env) {
    last_eval =
        evaluate_agent(trainer.agent(), *eval_env, cfg.eval_episodes, cfg.n_candidates,
                       cfg.seed, 0);
  }
  for (long step = 1; step <= cfg.total_steps; ++step) {
    std::pair<ValueStats, PolicyStats> stats;
    try {
      stats = trainer.step(data);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step), step,
                         e.layer);
    }
    if (eval_env && step % cfg.eval_interval == 0) {
      last_eval = evaluate_agent(trainer.agent(), *eval_env, cfg.eval_episodes,
                                 cfg.n_candidates, cfg.seed, std::uint64_t(step));
    }
    if (step % cfg.log_interval == 0) {
      TrainRecord rec;
      rec.step = step;
      rec.td_loss = stats.first.td_loss;
      rec.delta_penalty = stats.first.delta_penalty;
      rec.policy_obj = stats.second.policy_obj;
      rec.mean_q = stats.first.mean_q;
      rec.max_q = stats.first.max_abs_q;
      rec.mean_logpi = stats.second.mean_logpi;
      rec.eval_return = last_eval;
      out.records.push_back(rec);
      if (on_record) on_record(rec);
    }
  }
  out.agent = std::move(trainer.agent());
  return out;
}

struct AblationRow {
  std::string name;
  double eta = 0.0;
  double lambda = 0.0;
  double final_eval = 0.0;
  double final_max_q = 0.0;
  double peak_max_q = 0.0;
  double final_td_loss = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<TrainResult> runs;
};

// The four (eta, lambda) zero/nonzero combinations with otherwise identical
// config and seed. Initialization depends only on the seed, so all four runs
// start from the same parameters.
inline AblationResult ablation_grid(const TransitionDataset& data, const CdcConfig& base,
                                    const PointMassEnv* eval_env = nullptr) {
  struct Variant {
    const char* name;
    double eta, lambda;
  };
  const Variant variants[4] = {
      {"eta0_lambda0", 0.0, 0.0},
      {"eta0", 0.0, base.lambda},
      {"lambda0", base.eta, 0.0},
      {"full", base.eta, base.lambda},
  };
  AblationResult out;
  for (const auto& v : variants) {
    CdcConfig cfg = base;
    cfg.eta = v.eta;
    cfg.lambda = v.lambda;
    TrainResult run = train(cfg, data, eval_env);
    AblationRow row;
    row.name = v.name;
    row.eta = v.eta;
    row.lambda = v.lambda;
    if (!run.records.empty()) {
      const auto& last = run.records.back();
      row.final_eval = last.eval_return;
      row.final_max_q = last.max_q;
      row.final_td_loss = last.td_loss;
      for (const auto& r : run.records) row.peak_max_q = std::max(row.peak_max_q, r.max_q);
    }
    out.rows.push_back(row);
    out.runs.push_back(std::move(run));
  }
  return out;
}

}  // namespace cdc
