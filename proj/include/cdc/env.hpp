#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cdc/dataset.hpp"
#include "cdc/rng.hpp"

namespace cdc {

// Double-integrator point-mass tasks. State is [position, velocity] per axis,
// action is acceleration in [-1,1]^da, reward is -min(1, |position - target|),
// so rewards live in [-1, 0] and r* = 1. Episodes are truncated at `horizon`;
// the dynamics never terminate on their own.
//
// Step update (Euler, velocity first):
//   v' = v + (clip(a) + noise) * dt
//   x' = x + v' * dt
//   r  = -min(1, ||x' - target||)
struct EnvParams {
  std::string name;
  int axes = 1;  // ds = 2*axes, da = axes
  double dt = 0.05;
  double target = 1.0;          // per axis
  double dyn_noise = 0.05;      // std of acceleration noise
  double start_pos_std = 0.2;   // mu0: position ~ N(0, std)
  double start_vel_std = 0.05;  // mu0: velocity ~ N(0, std)
  int horizon = 200;
  double gamma = 0.99;
  double reward_scale = 1.0;  // 0 makes a degenerate all-zero-reward variant
};

class PointMassEnv {
 public:
  PointMassEnv() : PointMassEnv(EnvParams{}) {}
  explicit PointMassEnv(EnvParams p) : p_(std::move(p)) {}

  const EnvParams& params() const { return p_; }
  const std::string& name() const { return p_.name; }
  int state_dim() const { return 2 * p_.axes; }
  int action_dim() const { return p_.axes; }
  int horizon() const { return p_.horizon; }
  double gamma() const { return p_.gamma; }
  double reward_bound() const { return 1.0; }
  long clip_count() const { return clip_count_; }

  Eigen::VectorXd reset(Rng& rng) const {
    Eigen::VectorXd s(state_dim());
    for (int i = 0; i < p_.axes; ++i) s(i) = rng.normal(0.0, p_.start_pos_std);
    for (int i = 0; i < p_.axes; ++i) s(p_.axes + i) = rng.normal(0.0, p_.start_vel_std);
    return s;
  }

  struct StepResult {
    Eigen::VectorXd next_state;
    double reward = 0.0;
    bool terminal = false;
  };

  StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng& rng) {
    if (state.size() != state_dim() || action.size() != action_dim())
      throw ShapeError("step: state/action dimension mismatch");
    if (!state.allFinite() || !action.allFinite())
      throw NumericError("step: non-finite state or action");
    StepResult out;
    out.next_state.resize(state_dim());
    double err2 = 0.0;
    for (int i = 0; i < p_.axes; ++i) {
      double a = action(i);
      if (a < -1.0 || a > 1.0) {
        a = std::clamp(a, -1.0, 1.0);
        ++clip_count_;
      }
      if (p_.dyn_noise > 0.0) a += rng.normal(0.0, p_.dyn_noise);
      const double v = state(p_.axes + i) + a * p_.dt;
      const double x = state(i) + v * p_.dt;
      out.next_state(i) = x;
      out.next_state(p_.axes + i) = v;
      const double e = x - p_.target;
      err2 += e * e;
    }
    out.reward = -std::min(1.0, std::sqrt(err2)) * p_.reward_scale;
    out.terminal = false;
    return out;
  }

 private:
  EnvParams p_;
  long clip_count_ = 0;
};

inline PointMassEnv make_pointmass1d() {
  EnvParams p;
  p.name = "pointmass1d";
  p.axes = 1;
  return PointMassEnv(p);
}

inline PointMassEnv make_pointmass2d() {
  EnvParams p;
  p.name = "pointmass2d";
  p.axes = 2;
  return PointMassEnv(p);
}

inline const std::vector<std::string>& env_names() {
  static const std::vector<std::string> names = {"pointmass1d", "pointmass2d"};
  return names;
}

inline PointMassEnv make_env(const std::string& name) {
  if (name == "pointmass1d") return make_pointmass1d();
  if (name == "pointmass2d") return make_pointmass2d();
  throw ConfigError("unknown environment: " + name);
}

// Data-collection policies of graded quality. medium/expert are PD
// controllers toward the target that differ in action-noise scale; random is
// uniform on the action box.
enum class Tier { random, medium, expert };

inline const std::vector<std::string>& tier_names() {
  static const std::vector<std::string> names = {"random", "medium", "expert"};
  return names;
}

inline Tier tier_from_name(const std::string& name) {
  if (name == "random") return Tier::random;
  if (name == "medium") return Tier::medium;
  if (name == "expert") return Tier::expert;
  throw ConfigError("unknown tier: " + name);
}

class BehaviorPolicy {
 public:
  BehaviorPolicy(Tier tier, const PointMassEnv& env) : tier_(tier), env_(&env) {}

  Tier tier() const { return tier_; }

  Eigen::VectorXd act(const Eigen::VectorXd& state, Rng& rng) const {
    const int axes = env_->action_dim();
    Eigen::VectorXd a(axes);
    if (tier_ == Tier::random) {
      for (int i = 0; i < axes; ++i) a(i) = rng.uniform(-1.0, 1.0);
      return a;
    }
    const double noise = tier_ == Tier::expert ? 0.05 : 0.3;
    const double kp = 2.0, kd = 2.5;
    const double target = env_->params().target;
    for (int i = 0; i < axes; ++i) {
      const double x = state(i), v = state(axes + i);
      a(i) = std::clamp(kp * (target - x) - kd * v + rng.normal(0.0, noise), -1.0, 1.0);
    }
    return a;
  }

 private:
  Tier tier_;
  const PointMassEnv* env_;
};

using ActionSelector = std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)>;

struct RolloutResult {
  double undiscounted = 0.0;
  double discounted = 0.0;
  int length = 0;
};

inline RolloutResult rollout(PointMassEnv& env, const ActionSelector& select, int horizon,
                             Rng& rng) {
  if (horizon < 1) throw Error("rollout: horizon must be positive");
  RolloutResult out;
  Eigen::VectorXd s = env.reset(rng);
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd a = select(s, rng);
    auto step = env.step(s, a, rng);
    out.undiscounted += step.reward;
    out.discounted += disc * step.reward;
    disc *= env.gamma();
    ++out.length;
    if (step.terminal) break;
    s = std::move(step.next_state);
  }
  return out;
}

// Exactly n single-step transitions collected under the given tier. Episodes
// run to the horizon (flagged truncated); a final partial episode is cut
// without flags once n is reached.
inline TransitionDataset generate_dataset(PointMassEnv& env, const BehaviorPolicy& behavior,
                                          long n, std::uint64_t seed) {
  if (n < 1) throw Error("generate_dataset: n must be positive");
  TransitionDataset d;
  d.env_name = env.name();
  d.ds = env.state_dim();
  d.da = env.action_dim();
  d.states.resize(n, d.ds);
  d.actions.resize(n, d.da);
  d.rewards.resize(n);
  d.next_states.resize(n, d.ds);
  d.terminal.assign(std::size_t(n), 0);
  d.truncated.assign(std::size_t(n), 0);
  d.episode_start.assign(std::size_t(n), 0);

  long i = 0;
  std::uint64_t episode = 0;
  while (i < n) {
    Rng rng = substream(seed, "gen-data", episode++);
    Eigen::VectorXd s = env.reset(rng);
    for (int t = 0; t < env.horizon() && i < n; ++t) {
      const Eigen::VectorXd a = behavior.act(s, rng);
      auto step = env.step(s, a, rng);
      d.states.row(i) = s.transpose();
      d.actions.row(i) = a.transpose();
      d.rewards(i) = step.reward;
      d.next_states.row(i) = step.next_state.transpose();
      d.terminal[std::size_t(i)] = step.terminal ? 1 : 0;
      d.truncated[std::size_t(i)] = (t + 1 == env.horizon() && !step.terminal) ? 1 : 0;
      d.episode_start[std::size_t(i)] = (t == 0) ? 1 : 0;
      ++i;
      if (step.terminal) break;
      s = std::move(step.next_state);
    }
  }
  d.validate();
  return d;
}

struct ReferenceScores {
  double random_score = 0.0;
  double expert_score = 0.0;
};

// Mean undiscounted returns of the random and expert tiers, used by the
// normalized score. Fixed protocol: `episodes` seeded rollouts per tier.
inline ReferenceScores reference_scores(PointMassEnv& env, int episodes, std::uint64_t seed) {
  if (episodes < 10) throw Error("reference_scores: need at least 10 episodes per tier");
  ReferenceScores out;
  for (int pass = 0; pass < 2; ++pass) {
    const Tier tier = pass == 0 ? Tier::random : Tier::expert;
    BehaviorPolicy pol(tier, env);
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
      Rng rng = substream(seed, pass == 0 ? "ref-random" : "ref-expert", std::uint64_t(e));
      total += rollout(env, [&](const Eigen::VectorXd& s, Rng& r) { return pol.act(s, r); },
                       env.horizon(), rng)
                   .undiscounted;
    }
    (pass == 0 ? out.random_score : out.expert_score) = total / episodes;
  }
  if (out.expert_score <= out.random_score)
    throw DegenerateReferenceError("expert reference does not beat random reference");
  return out;
}

inline constexpr std::uint64_t kReferenceSeed = 20240901;
inline constexpr int kReferenceEpisodes = 100;

inline ReferenceScores reference_scores(PointMassEnv& env) {
  return reference_scores(env, kReferenceEpisodes, kReferenceSeed);
}

}  // namespace cdc
