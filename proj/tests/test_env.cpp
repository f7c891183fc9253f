#include <catch2/catch_amalgamated.hpp>

#include "cdc/env.hpp"

using namespace cdc;

TEST_CASE("reset with zero start noise gives the origin") {
  EnvParams p;
  p.name = "pointmass1d";
  p.start_pos_std = 0.0;
  p.start_vel_std = 0.0;
  PointMassEnv env(p);
  Rng rng(1);
  const Eigen::VectorXd s = env.reset(rng);
  REQUIRE(s(0) == 0.0);
  REQUIRE(s(1) == 0.0);
}

TEST_CASE("reset is seed-deterministic") {
  PointMassEnv env = make_pointmass1d();
  Rng a(99), b(99);
  REQUIRE(env.reset(a).isApprox(env.reset(b), 0.0));
}

TEST_CASE("reset mean matches the configured start distribution") {
  PointMassEnv env = make_pointmass1d();
  Rng rng(4);
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += env.reset(rng)(0);
  const double mean = sum / n;
  const double se = env.params().start_pos_std / std::sqrt(double(n));
  REQUIRE(std::abs(mean - 0.0) <= 3.0 * se);
}

TEST_CASE("reward is zero at the target") {
  EnvParams p;
  p.name = "pointmass1d";
  p.dyn_noise = 0.0;
  PointMassEnv env(p);
  Rng rng(1);
  Eigen::VectorXd s(2), a(1);
  s << 1.0, 0.0;
  a << 0.0;
  REQUIRE(env.step(s, a, rng).reward == 0.0);
}

TEST_CASE("zero action and zero velocity leave the position unchanged") {
  EnvParams p;
  p.name = "pointmass1d";
  p.dyn_noise = 0.0;
  PointMassEnv env(p);
  Rng rng(1);
  Eigen::VectorXd s(2), a(1);
  s << 0.4, 0.0;
  a << 0.0;
  REQUIRE(env.step(s, a, rng).next_state(0) == 0.4);
}

TEST_CASE("one analytic double-integrator step, velocity before position") {
  EnvParams p;
  p.name = "pointmass1d";
  p.dyn_noise = 0.0;
  PointMassEnv env(p);
  Rng rng(1);
  Eigen::VectorXd s(2), a(1);
  s << 0.0, 0.0;
  a << 1.0;
  const auto r = env.step(s, a, rng);
  REQUIRE(r.next_state(1) == Catch::Approx(0.05).margin(1e-15));
  REQUIRE(r.next_state(0) == Catch::Approx(0.0025).margin(1e-15));
}

TEST_CASE("out-of-box actions are clipped and counted") {
  EnvParams p;
  p.name = "pointmass1d";
  p.dyn_noise = 0.0;
  PointMassEnv env(p);
  Rng rng(1);
  Eigen::VectorXd s(2), a(1);
  s << 0.0, 0.0;
  a << 4.0;
  const auto r = env.step(s, a, rng);
  REQUIRE(r.next_state(1) == Catch::Approx(0.05).margin(1e-15));  // clipped to 1
  REQUIRE(env.clip_count() == 1);
}

TEST_CASE("non-finite input raises a numeric error") {
  PointMassEnv env = make_pointmass1d();
  Rng rng(1);
  Eigen::VectorXd s(2), a(1);
  s << std::numeric_limits<double>::infinity(), 0.0;
  a << 0.0;
  REQUIRE_THROWS_AS(env.step(s, a, rng), NumericError);
}

namespace {

// degenerate constant-reward environment for rollout arithmetic
PointMassEnv constant_reward_env() {
  EnvParams p;
  p.name = "flat";
  p.dyn_noise = 0.0;
  p.start_pos_std = 0.0;
  p.start_vel_std = 0.0;
  p.reward_scale = 0.0;
  return PointMassEnv(p);
}

}  // namespace

TEST_CASE("rollout discounting: gamma=0 keeps only the first reward") {
  EnvParams p = constant_reward_env().params();
  p.gamma = 0.0;
  // reward_scale 0 gives reward 0; shift so every reward is exactly -min(1,|x-1|) = -1
  p.reward_scale = 1.0;
  p.target = 100.0;  // far target, reward saturates at -1 every step
  PointMassEnv env(p);
  Rng rng(1);
  auto sel = [](const Eigen::VectorXd&, Rng&) { return Eigen::VectorXd::Zero(1); };
  const auto r = rollout(env, sel, 7, rng);
  REQUIRE(r.discounted == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE(r.undiscounted == Catch::Approx(-7.0).margin(1e-12));
  REQUIRE(r.length == 7);
}

TEST_CASE("rollout discounting: constant reward, horizon 3, gamma 0.5") {
  EnvParams p = constant_reward_env().params();
  p.gamma = 0.5;
  p.reward_scale = 1.0;
  p.target = 100.0;  // saturated reward -1 each step
  PointMassEnv env(p);
  Rng rng(1);
  auto sel = [](const Eigen::VectorXd&, Rng&) { return Eigen::VectorXd::Zero(1); };
  const auto r = rollout(env, sel, 3, rng);
  // -(1 + 0.5 + 0.25) = -1.75
  REQUIRE(r.discounted == Catch::Approx(-1.75).margin(1e-12));
}

TEST_CASE("expert behavior beats random on pointmass1d (frozen seeds)") {
  PointMassEnv env = make_pointmass1d();
  double means[2] = {0, 0};
  for (int pass = 0; pass < 2; ++pass) {
    BehaviorPolicy pol(pass == 0 ? Tier::random : Tier::expert, env);
    double total = 0.0;
    for (int e = 0; e < 100; ++e) {
      Rng rng = substream(555, pass == 0 ? "rnd" : "exp", std::uint64_t(e));
      total += rollout(env, [&](const Eigen::VectorXd& s, Rng& r) { return pol.act(s, r); },
                       env.horizon(), rng)
                   .undiscounted;
    }
    means[pass] = total / 100.0;
  }
  REQUIRE(means[1] > means[0]);
}

TEST_CASE("behavior tiers are strictly ordered on both environments (frozen seeds)") {
  for (const auto& name : env_names()) {
    PointMassEnv env = make_env(name);
    double means[3];
    const Tier tiers[3] = {Tier::random, Tier::medium, Tier::expert};
    for (int t = 0; t < 3; ++t) {
      BehaviorPolicy pol(tiers[t], env);
      double total = 0.0;
      for (int e = 0; e < 60; ++e) {
        Rng rng = substream(777, name + std::to_string(t), std::uint64_t(e));
        total += rollout(env, [&](const Eigen::VectorXd& s, Rng& r) { return pol.act(s, r); },
                         env.horizon(), rng)
                     .undiscounted;
      }
      means[t] = total / 60.0;
    }
    INFO(name << ": random=" << means[0] << " medium=" << means[1] << " expert=" << means[2]);
    REQUIRE(means[2] > means[1]);
    REQUIRE(means[1] > means[0]);
  }
}

TEST_CASE("rollouts always terminate within the horizon") {
  PointMassEnv env = make_pointmass2d();
  BehaviorPolicy pol(Tier::medium, env);
  for (int e = 0; e < 10; ++e) {
    Rng rng = substream(31, "horizon", std::uint64_t(e));
    const auto r = rollout(env, [&](const Eigen::VectorXd& s, Rng& rr) { return pol.act(s, rr); },
                           env.horizon(), rng);
    REQUIRE(r.length <= env.horizon());
  }
}

TEST_CASE("reward bound |r| <= r* holds on a large random sweep") {
  PointMassEnv env = make_pointmass1d();
  Rng rng(8080);
  Eigen::VectorXd s = env.reset(rng);
  Eigen::VectorXd a(1);
  long violations = 0;
  for (long i = 0; i < 1000000; ++i) {
    a(0) = rng.uniform(-1, 1);
    auto r = env.step(s, a, rng);
    if (std::abs(r.reward) > env.reward_bound()) ++violations;
    s = std::move(r.next_state);
    if (i % 500 == 499) s = env.reset(rng);  // keep states in a realistic range
  }
  REQUIRE(violations == 0);
}

TEST_CASE("generate_dataset: n=1 has the episode-start flag set") {
  PointMassEnv env = make_pointmass1d();
  BehaviorPolicy pol(Tier::random, env);
  const auto d = generate_dataset(env, pol, 1, 5);
  REQUIRE(d.size() == 1);
  REQUIRE(d.episode_start[0] == 1);
}

TEST_CASE("generate_dataset is byte-identical per seed") {
  PointMassEnv env = make_pointmass1d();
  BehaviorPolicy pol(Tier::medium, env);
  const auto d1 = generate_dataset(env, pol, 500, 17);
  PointMassEnv env2 = make_pointmass1d();
  const auto d2 = generate_dataset(env2, pol, 500, 17);
  REQUIRE(serialize_dataset(d1) == serialize_dataset(d2));
}

TEST_CASE("random-tier action mean is near zero per dimension") {
  PointMassEnv env = make_pointmass2d();
  BehaviorPolicy pol(Tier::random, env);
  Rng rng(66);
  const long n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd s = env.reset(rng);
  for (long i = 0; i < n; ++i) sum += pol.act(s, rng);
  const double se = std::sqrt(1.0 / 3.0) / std::sqrt(double(n));  // U[-1,1] std
  REQUIRE(std::abs(sum(0) / double(n)) <= 3.0 * se);
  REQUIRE(std::abs(sum(1) / double(n)) <= 3.0 * se);
}

TEST_CASE("reference scores: degenerate zero-reward environment raises") {
  EnvParams p;
  p.name = "flat";
  p.reward_scale = 0.0;
  PointMassEnv env(p);
  REQUIRE_THROWS_AS(reference_scores(env, 10, 1), DegenerateReferenceError);
}

TEST_CASE("reference scores are seed-deterministic") {
  PointMassEnv env = make_pointmass1d();
  const auto a = reference_scores(env, 20, 12);
  const auto b = reference_scores(env, 20, 12);
  REQUIRE(a.random_score == b.random_score);
  REQUIRE(a.expert_score == b.expert_score);
}

TEST_CASE("reference scores require enough episodes") {
  PointMassEnv env = make_pointmass1d();
  REQUIRE_THROWS(reference_scores(env, 5, 1));
}
