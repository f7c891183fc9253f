#include <catch2/catch_amalgamated.hpp>

#include "cdc/agent.hpp"
#include "cdc/ensemble.hpp"

using namespace cdc;

namespace {

// ensemble whose members are constant functions, for exact arithmetic
QEnsemble constant_ensemble(const std::vector<double>& values, double nu) {
  Rng rng(1);
  QEnsemble e(1, 1, int(values.size()), nu, {2}, rng);
  for (std::size_t j = 0; j < values.size(); ++j) {
    for (auto& w : e.online()[j].weights()) w.setZero();
    for (auto& b : e.online()[j].biases()) b.setZero();
    e.online()[j].biases()[1](0) = values[j];
  }
  e.target() = e.online();
  return e;
}

}  // namespace

TEST_CASE("q_bar convex combination: M=2, values (1,3), nu=0.75 -> 1.5") {
  const QEnsemble e = constant_ensemble({1.0, 3.0}, 0.75);
  Eigen::VectorXd s(1), a(1);
  s << 0.0;
  a << 0.0;
  REQUIRE(e.q_bar(s, a) == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("nu=1 gives the ensemble min, nu=0 the max") {
  QEnsemble e = constant_ensemble({2.0, -1.0, 5.0}, 1.0);
  Eigen::VectorXd s(1), a(1);
  s << 0.3;
  a << -0.4;
  REQUIRE(e.q_bar(s, a) == Catch::Approx(-1.0).margin(1e-12));
  e.set_nu(0.0);
  REQUIRE(e.q_bar(s, a) == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("q_bar lies between the ensemble min and max") {
  Rng rng(21);
  QEnsemble e(3, 2, 4, 0.75, {8, 8}, rng);
  const MatrixXd sa = MatrixXd::Random(64, 5);
  const MatrixXd vals = e.member_values(sa, false);
  const Eigen::VectorXd qb = e.q_bar_batch(sa, false);
  for (long i = 0; i < 64; ++i) {
    REQUIRE(qb(i) >= vals.row(i).minCoeff() - 1e-12);
    REQUIRE(qb(i) <= vals.row(i).maxCoeff() + 1e-12);
  }
}

TEST_CASE("polyak tau=1 copies online into targets") {
  Rng rng(2);
  QEnsemble e(2, 1, 2, 0.75, {4}, rng);
  // desynchronize targets first
  e.polyak_update(0.25);
  for (auto& net : e.online())
    for (auto& w : net.weights()) w.array() += 0.5;
  e.polyak_update(1.0);
  REQUIRE(e.target_hash() == e.online_hash());
}

TEST_CASE("polyak tau=0 leaves targets unchanged") {
  Rng rng(3);
  QEnsemble e(2, 1, 2, 0.75, {4}, rng);
  for (auto& net : e.online())
    for (auto& w : net.weights()) w.array() += 1.0;
  const auto before = e.target_hash();
  e.polyak_update(0.0);
  REQUIRE(e.target_hash() == before);
}

TEST_CASE("polyak scalar case: theta=2, theta'=0, tau=0.005 -> 0.01") {
  QEnsemble e = constant_ensemble({2.0}, 0.75);
  for (auto& b : e.target()[0].biases()) b.setZero();
  e.polyak_update(0.005);
  REQUIRE(e.target()[0].biases()[1](0) == Catch::Approx(0.01).margin(1e-15));
}

TEST_CASE("polyak contracts the target toward the online parameters") {
  Rng rng(4);
  QEnsemble e(2, 1, 1, 0.75, {4}, rng);
  for (auto& w : e.online()[0].weights()) w.array() += 0.7;
  auto gap = [&]() {
    double g = 0.0;
    for (int l = 0; l < e.online()[0].n_layers(); ++l)
      g = std::max(g, (e.online()[0].weights()[l] - e.target()[0].weights()[l])
                          .cwiseAbs()
                          .maxCoeff());
    return g;
  };
  const double g0 = gap();
  e.polyak_update(0.25);
  REQUIRE(gap() == Catch::Approx(0.75 * g0).epsilon(1e-12));
}

TEST_CASE("select_action with one candidate returns the sampled action") {
  Rng init(6);
  GaussianPolicy pol(2, 1, {4}, init);
  QEnsemble e(2, 1, 2, 0.75, {4}, init);
  Eigen::VectorXd s(2);
  s << 0.1, -0.3;
  Rng a(9), b(9);
  const Eigen::VectorXd chosen = select_action(pol, e, s, 1, a);
  const Eigen::VectorXd sampled = pol.sample_actions(s.transpose(), 1, b).row(0).transpose();
  REQUIRE(chosen.isApprox(sampled, 0.0));
}

TEST_CASE("a critic rigged to favor one candidate returns that candidate") {
  Rng init(7);
  GaussianPolicy pol(2, 1, {4}, init);
  Eigen::VectorXd s(2);
  s << 0.0, 0.0;
  Rng pick_rng(12);
  const MatrixXd cands = pol.sample_actions(s.transpose(), 8, pick_rng);
  const int favored = 5;
  auto scorer = [&](const MatrixXd& sa) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(sa.rows());
    for (long k = 0; k < sa.rows(); ++k)
      if (std::abs(sa(k, 2) - cands(favored, 0)) < 1e-12) v(k) = 10.0;
    return v;
  };
  Rng sel_rng(12);  // same stream: identical candidates
  const Eigen::VectorXd chosen = select_action(pol, scorer, s, 8, sel_rng);
  REQUIRE(chosen(0) == Catch::Approx(cands(favored, 0)).margin(1e-15));
}

TEST_CASE("select_action matches an exhaustive scan over the same candidates") {
  Rng init(8);
  GaussianPolicy pol(3, 2, {6}, init);
  QEnsemble e(3, 2, 3, 0.75, {6}, init);
  Eigen::VectorXd s(3);
  s << 0.2, -0.1, 0.05;

  Rng a(33);
  const Eigen::VectorXd chosen = select_action(pol, e, s, 15, a);

  Rng b(33);
  const MatrixXd cands = pol.sample_actions(s.transpose(), 15, b);
  int best = 0;
  double best_val = -1e300;
  for (int k = 0; k < 15; ++k) {
    const double v = e.q_bar(s, cands.row(k).transpose());
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  REQUIRE(chosen.isApprox(cands.row(best).transpose(), 0.0));
}

TEST_CASE("selection is invariant to a state-dependent critic shift") {
  Rng init(9);
  GaussianPolicy pol(2, 1, {6}, init);
  QEnsemble e(2, 1, 2, 0.75, {6}, init);
  Eigen::VectorXd s(2);
  s << 0.4, -0.6;
  auto base = [&](const MatrixXd& sa) { return e.q_bar_batch(sa, false); };
  auto shifted = [&](const MatrixXd& sa) {
    Eigen::VectorXd v = e.q_bar_batch(sa, false);
    for (long k = 0; k < sa.rows(); ++k) v(k) += 100.0 * std::sin(sa(k, 0)) + 7.0 * sa(k, 1);
    return v;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r1(seed), r2(seed);
    const Eigen::VectorXd a1 = select_action(pol, base, s, 12, r1);
    const Eigen::VectorXd a2 = select_action(pol, shifted, s, 12, r2);
    REQUIRE(a1.isApprox(a2, 0.0));
  }
}

TEST_CASE("agent checkpoints round-trip bit-exactly") {
  Agent a = make_agent(4, 2, 3, 0.75, {8, 8}, 321);
  const std::string bytes = serialize_agent(a);
  const Agent back = parse_agent(bytes);
  REQUIRE(back.state_dim == 4);
  REQUIRE(back.action_dim == 2);
  REQUIRE(back.critics.size() == 3);
  REQUIRE(back.critics.nu() == a.critics.nu());
  REQUIRE(back.policy.net().parameter_hash() == a.policy.net().parameter_hash());
  REQUIRE(back.critics.online_hash() == a.critics.online_hash());
  REQUIRE(back.critics.target_hash() == a.critics.target_hash());
  REQUIRE(serialize_agent(back) == bytes);
}

TEST_CASE("corrupted checkpoint is rejected") {
  Agent a = make_agent(2, 1, 2, 0.75, {4}, 5);
  std::string bytes = serialize_agent(a);
  bytes[bytes.size() / 2] ^= 0x01;
  REQUIRE_THROWS_AS(parse_agent(bytes), FormatError);
}
