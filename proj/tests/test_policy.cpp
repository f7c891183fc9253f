#include <catch2/catch_amalgamated.hpp>

#include "cdc/grad_check.hpp"
#include "cdc/policy.hpp"

using namespace cdc;

namespace {

GaussianPolicy rigged_policy(double mean, double log_std) {
  // zero-weight net whose output bias pins the heads to (mean, log_std)
  DenseNet net({2, 4, 2});
  net.biases()[1](0) = mean;
  net.biases()[1](1) = log_std;
  return GaussianPolicy(std::move(net), 1);
}

}  // namespace

TEST_CASE("samples collapse to tanh(0)=0 when the log-std is clamped at the floor") {
  GaussianPolicy pol = rigged_policy(0.0, -20.0);  // clamps to -5, sigma ~ 6.7e-3
  Rng rng(3);
  const MatrixXd a = pol.sample_actions(MatrixXd::Zero(1, 2), 1000, rng);
  REQUIRE(a.cwiseAbs().maxCoeff() < 0.05);
  REQUIRE(std::abs(a.mean()) < 0.01);
}

TEST_CASE("samples lie strictly inside the open box") {
  Rng init(5);
  GaussianPolicy pol(3, 2, {8, 8}, init);
  Rng rng(6);
  const MatrixXd s = MatrixXd::Random(16, 3);
  const MatrixXd a = pol.sample_actions(s, 32, rng);
  REQUIRE((a.array().abs() < 1.0).all());
}

TEST_CASE("symmetric head gives near-zero sample mean") {
  GaussianPolicy pol = rigged_policy(0.0, -0.5);  // sigma ~ 0.607
  Rng rng(11);
  const long n = 100000;
  const MatrixXd a = pol.sample_actions(MatrixXd::Zero(1, 2), int(n), rng);
  // crude bound on the std of tanh(sigma*eps): below sigma
  const double se = 0.607 / std::sqrt(double(n));
  REQUIRE(std::abs(a.mean()) <= 3.0 * se);
}

TEST_CASE("log density of the standard normal head at a=0") {
  GaussianPolicy pol = rigged_policy(0.0, 0.0);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2), a(1);
  a << 0.0;
  REQUIRE(pol.log_prob(s, a) == Catch::Approx(-0.9189385332046727).margin(1e-12));
}

TEST_CASE("log_prob stays finite for boundary actions") {
  GaussianPolicy pol = rigged_policy(0.3, -0.2);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2), a(1);
  a << 1.0;
  REQUIRE(std::isfinite(pol.log_prob(s, a)));
  a << -1.0;
  REQUIRE(std::isfinite(pol.log_prob(s, a)));
}

TEST_CASE("density integrates to one over the box (1-D quadrature)") {
  GaussianPolicy pol = rigged_policy(0.3, std::log(0.5));
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  // Simpson rule on (-1, 1); the integrand vanishes at the endpoints in the
  // atanh parameterization, so the clamped edge evaluation is harmless
  const int n = 20000;
  const double h = 2.0 / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -1.0 + i * h;
    Eigen::VectorXd a(1);
    a << std::clamp(x, -1.0 + 1e-9, 1.0 - 1e-9);
    const double f = std::exp(pol.log_prob(s, a));
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * f;
  }
  integral *= h / 3.0;
  REQUIRE(integral == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("log_prob gradient matches finite differences over random probes") {
  Rng rng(77);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    GaussianPolicy pol(2, 1, {6}, rng);
    Eigen::VectorXd s(2), a(1);
    s << rng.uniform(-1, 1), rng.uniform(-1, 1);
    a << rng.uniform(-0.9, 0.9);

    const auto heads = pol.heads(s.transpose());
    DenseNet::Grads g;
    g.init_like(pol.net());
    Eigen::VectorXd w(1);
    w << 1.0;
    pol.log_prob_backward(heads, a.transpose(), w, &g);
    Eigen::VectorXd analytic;
    {
      DenseNet tmp = pol.net();
      tmp.weights() = g.dW;
      tmp.biases() = g.db;
      tmp.flatten(analytic);
    }
    Eigen::VectorXd params;
    pol.net().flatten(params);
    GaussianPolicy probe_pol = pol;
    const double err = grad_check(
        [&](const Eigen::VectorXd& p) {
          probe_pol.net().unflatten(p);
          return probe_pol.log_prob(s, a);
        },
        params, analytic, 1e-5);
    worst = std::max(worst, err);
  }
  REQUIRE(worst <= 1e-4);
}

TEST_CASE("reparameterized sample gradient matches finite differences") {
  Rng rng(88);
  double worst = 0.0;
  for (int probe = 0; probe < 50; ++probe) {
    GaussianPolicy pol(2, 2, {6}, rng);
    Eigen::VectorXd s(2);
    s << rng.uniform(-1, 1), rng.uniform(-1, 1);

    // fixed noise: the probe differentiates <u, tanh(mean + sigma*eps)>
    Eigen::VectorXd eps(2), u(2);
    eps << rng.normal(), rng.normal();
    u << rng.uniform(-1, 1), rng.uniform(-1, 1);

    const auto heads = pol.heads(s.transpose());
    GaussianPolicy::Samples samples;
    samples.per_state = 1;
    samples.noises = eps.transpose();
    samples.actions.resize(1, 2);
    for (int d = 0; d < 2; ++d)
      samples.actions(0, d) = std::tanh(heads.mean(0, d) + heads.sigma(0, d) * eps(d));

    DenseNet::Grads g;
    g.init_like(pol.net());
    pol.reparam_backward(heads, samples, u.transpose(), &g);
    Eigen::VectorXd analytic;
    {
      DenseNet tmp = pol.net();
      tmp.weights() = g.dW;
      tmp.biases() = g.db;
      tmp.flatten(analytic);
    }
    Eigen::VectorXd params;
    pol.net().flatten(params);
    GaussianPolicy probe_pol = pol;
    const double err = grad_check(
        [&](const Eigen::VectorXd& p) {
          probe_pol.net().unflatten(p);
          const auto h = probe_pol.heads(s.transpose());
          double val = 0.0;
          for (int d = 0; d < 2; ++d)
            val += u(d) * std::tanh(h.mean(0, d) + h.sigma(0, d) * eps(d));
          return val;
        },
        params, analytic, 1e-5);
    worst = std::max(worst, err);
  }
  REQUIRE(worst <= 1e-4);
}

TEST_CASE("sampling is deterministic per seed") {
  Rng init(15);
  GaussianPolicy pol(2, 1, {8}, init);
  Rng a(4), b(4);
  const MatrixXd s = MatrixXd::Random(3, 2);
  REQUIRE(pol.sample_actions(s, 5, a).isApprox(pol.sample_actions(s, 5, b), 0.0));
}
