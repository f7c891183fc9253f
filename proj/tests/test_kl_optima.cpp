#include <catch2/catch_amalgamated.hpp>

#include "cdc/kl_optima.hpp"

using namespace cdc;

namespace {

Eigen::VectorXd random_simplex(int n, Rng& rng) {
  Eigen::VectorXd p(n);
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    p(a) = rng.uniform(0.05, 1.0);
    total += p(a);
  }
  return p / total;
}

}  // namespace

TEST_CASE("constant Q makes both optima equal the behavior distribution") {
  Rng rng(1);
  const Eigen::VectorXd pb = random_simplex(4, rng);
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(4, 1.7);
  REQUIRE((forward_kl_optimum(q, pb, 0.8) - pb).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((reverse_kl_optimum(q, pb, 0.8) - pb).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("very large lambda collapses both optima onto the behavior policy") {
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const int n = 2 + int(rng.uniform_index(5));
    const Eigen::VectorXd pb = random_simplex(n, rng);
    Eigen::VectorXd q(n);
    for (int a = 0; a < n; ++a) q(a) = rng.uniform(-2, 2);
    REQUIRE((forward_kl_optimum(q, pb, 1e6) - pb).cwiseAbs().maxCoeff() < 1e-4);
    REQUIRE((reverse_kl_optimum(q, pb, 1e6) - pb).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("closed forms match projected-gradient brute force on a 4-action instance") {
  Rng rng(3);
  const Eigen::VectorXd pb = random_simplex(4, rng);
  Eigen::VectorXd q(4);
  q << 0.9, -0.4, 1.6, 0.2;
  const auto res = lemma1_check(q, pb, 0.7);
  INFO("forward dev " << res.forward_dev << " reverse dev " << res.reverse_dev);
  REQUIRE(res.forward_dev <= 1e-6);
  REQUIRE(res.reverse_dev <= 1e-6);
}

TEST_CASE("closed forms match brute force across random instances up to |A|=6") {
  Rng rng(4);
  const double lambdas[3] = {0.3, 1.0, 3.0};
  for (int t = 0; t < 12; ++t) {
    const int n = 2 + int(rng.uniform_index(5));
    const Eigen::VectorXd pb = random_simplex(n, rng);
    Eigen::VectorXd q(n);
    for (int a = 0; a < n; ++a) q(a) = rng.uniform(-2, 2);
    const auto res = lemma1_check(q, pb, lambdas[t % 3]);
    INFO("instance " << t << " |A|=" << n << " fwd " << res.forward_dev << " rev "
                     << res.reverse_dev);
    REQUIRE(res.forward_dev <= 1e-6);
    REQUIRE(res.reverse_dev <= 1e-6);
  }
}

TEST_CASE("forward optimum is an exponential tilt: probability ratios follow Q") {
  Rng rng(5);
  const int n = 5;
  const Eigen::VectorXd pb = random_simplex(n, rng);
  Eigen::VectorXd q(n);
  q << -1.0, 0.2, 0.7, 1.5, 0.21;
  const Eigen::VectorXd pi = forward_kl_optimum(q, pb, 0.9);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (q(a) > q(b)) REQUIRE(pi(a) / pb(a) > pi(b) / pb(b));
}

TEST_CASE("reverse optimum normalizes with positive denominators") {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const int n = 2 + int(rng.uniform_index(5));
    const Eigen::VectorXd pb = random_simplex(n, rng);
    Eigen::VectorXd q(n);
    for (int a = 0; a < n; ++a) q(a) = rng.uniform(-5, 5);
    const Eigen::VectorXd pi = reverse_kl_optimum(q, pb, 0.5);
    REQUIRE(std::abs(pi.sum() - 1.0) < 1e-9);
    REQUIRE((pi.array() > 0.0).all());
  }
}

TEST_CASE("invalid inputs are rejected") {
  Eigen::VectorXd q(3), pb(3);
  q << 1, 2, 3;
  pb << 0.2, 0.3, 0.5;
  REQUIRE_THROWS(forward_kl_optimum(q, pb, 0.0));
  REQUIRE_THROWS(forward_kl_optimum(q, pb, -1.0));
  pb << 0.0, 0.5, 0.5;
  REQUIRE_THROWS(reverse_kl_optimum(q, pb, 1.0));
}

TEST_CASE("brute-force objective value is never above the closed-form value") {
  Rng rng(7);
  for (int t = 0; t < 6; ++t) {
    const int n = 3 + int(rng.uniform_index(3));
    const Eigen::VectorXd pb = random_simplex(n, rng);
    Eigen::VectorXd q(n);
    for (int a = 0; a < n; ++a) q(a) = rng.uniform(-2, 2);
    const double lambda = 0.8;
    const auto closed_f = forward_kl_optimum(q, pb, lambda);
    const auto brute_f = maximize_regularized_objective(q, pb, lambda, false);
    REQUIRE(regularized_objective(brute_f, q, pb, lambda, false) <=
            regularized_objective(closed_f, q, pb, lambda, false) + 1e-9);
    const auto closed_r = reverse_kl_optimum(q, pb, lambda);
    const auto brute_r = maximize_regularized_objective(q, pb, lambda, true);
    REQUIRE(regularized_objective(brute_r, q, pb, lambda, true) <=
            regularized_objective(closed_r, q, pb, lambda, true) + 1e-9);
  }
}
