#include <catch2/catch_amalgamated.hpp>

#include "cdc/adam.hpp"
#include "cdc/grad_check.hpp"
#include "cdc/net.hpp"

using namespace cdc;

TEST_CASE("forward of a single identity layer is the identity") {
  DenseNet net({2, 2});
  net.weights()[0] = MatrixXd::Identity(2, 2);
  VectorXd x(2);
  x << 1.0, 2.0;
  REQUIRE(net.forward(x).isApprox(x, 0.0));
}

TEST_CASE("all-zero weights return the output bias for any input") {
  DenseNet net({3, 4, 2});
  net.biases()[1] << 0.5, -1.25;
  Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = rng.uniform(-2, 2);
    VectorXd y = net.forward(x);
    REQUIRE(y(0) == 0.5);
    REQUIRE(y(1) == -1.25);
  }
}

TEST_CASE("seeded two-layer net matches a scalar re-evaluation of affine+relu") {
  Rng rng(42);
  DenseNet net({2, 3, 1}, rng);
  VectorXd x(2);
  x << 0.3, -1.1;

  // independent scalar composition of the same parameters
  double hidden[3];
  for (int i = 0; i < 3; ++i) {
    double z = net.biases()[0](i);
    for (int j = 0; j < 2; ++j) z += net.weights()[0](i, j) * x(j);
    hidden[i] = z > 0.0 ? z : 0.0;
  }
  double out = net.biases()[1](0);
  for (int i = 0; i < 3; ++i) out += net.weights()[1](0, i) * hidden[i];

  REQUIRE(net.forward(x)(0) == Catch::Approx(out).margin(1e-15));
}

TEST_CASE("forward is deterministic bit for bit") {
  Rng rng(11);
  DenseNet net({4, 8, 8, 2}, rng);
  VectorXd x(4);
  x << 0.1, -0.2, 0.3, -0.4;
  const VectorXd y1 = net.forward(x);
  const VectorXd y2 = net.forward(x);
  REQUIRE(std::memcmp(y1.data(), y2.data(), sizeof(double) * 2) == 0);
}

TEST_CASE("forward rejects dimension mismatch") {
  Rng rng(1);
  DenseNet net({3, 4, 1}, rng);
  VectorXd x(2);
  REQUIRE_THROWS_AS(net.forward(x), ShapeError);
}

TEST_CASE("linear net gradient is the outer product u x^T") {
  DenseNet net({3, 2});
  Rng rng(5);
  for (auto& w : net.weights())
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
  VectorXd x(3), u(2);
  x << 1.0, -2.0, 0.5;
  u << 2.0, -1.0;

  DenseNet::Cache cache;
  net.batch_forward(x.transpose(), &cache);
  DenseNet::Grads g;
  g.init_like(net);
  net.batch_backward(cache, u.transpose(), &g);
  REQUIRE(g.dW[0].isApprox(u * x.transpose(), 1e-15));
  REQUIRE(g.db[0].isApprox(u, 1e-15));
}

TEST_CASE("relu blocks gradient through strictly negative pre-activations") {
  DenseNet net({1, 1, 1});
  net.weights()[0](0, 0) = 1.0;
  net.biases()[0](0) = -5.0;  // pre-activation -4 at x=1
  net.weights()[1](0, 0) = 3.0;
  DenseNet::Cache cache;
  MatrixXd x(1, 1);
  x(0, 0) = 1.0;
  net.batch_forward(x, &cache);
  DenseNet::Grads g;
  g.init_like(net);
  MatrixXd u(1, 1);
  u(0, 0) = 1.0;
  net.batch_backward(cache, u, &g);
  REQUIRE(g.dW[0](0, 0) == 0.0);
  REQUIRE(g.db[0](0) == 0.0);
}

TEST_CASE("backward matches central finite differences over random probes") {
  Rng rng(202);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const int in = 1 + int(rng.uniform_index(4));
    const int hid = 2 + int(rng.uniform_index(5));
    const int out = 1 + int(rng.uniform_index(3));
    DenseNet net({in, hid, out}, rng);
    VectorXd x(in), u(out);
    for (int i = 0; i < in; ++i) x(i) = rng.uniform(-1.5, 1.5);
    for (int i = 0; i < out; ++i) u(i) = rng.uniform(-1.5, 1.5);

    DenseNet::Cache cache;
    net.batch_forward(x.transpose(), &cache);
    DenseNet::Grads g;
    g.init_like(net);
    net.batch_backward(cache, u.transpose(), &g);
    VectorXd analytic(net.parameter_count());
    {
      DenseNet flat = net;
      flat.weights() = g.dW;
      flat.biases() = g.db;
      flat.flatten(analytic);
    }

    VectorXd params;
    net.flatten(params);
    DenseNet probe_net = net;
    const double err = grad_check(
        [&](const VectorXd& p) {
          probe_net.unflatten(p);
          return u.dot(probe_net.forward(x));
        },
        params, analytic, 1e-5);
    worst = std::max(worst, err);
  }
  REQUIRE(worst <= 1e-5);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Rng rng(3);
  DenseNet net({2, 4, 1}, rng);
  const std::uint64_t before = net.parameter_hash();
  AdamState state;
  state.init_like(net);
  DenseNet::Grads g;
  g.init_like(net);
  for (int t = 0; t < 10; ++t) adam_step(net, g, state, 0.1);
  REQUIRE(net.parameter_hash() == before);
  REQUIRE(state.step == 10);
}

TEST_CASE("single adam step on a scalar matches the hand-computed recurrence") {
  // param 0, grad 1, defaults, lr 0.1: bias correction normalizes the step to
  // lr/(1+eps), so the parameter lands at about -0.1
  DenseNet net({1, 1});
  net.weights()[0](0, 0) = 0.0;
  net.biases()[0](0) = 0.0;
  AdamState state;
  state.init_like(net);
  DenseNet::Grads g;
  g.init_like(net);
  g.dW[0](0, 0) = 1.0;
  g.db[0](0) = 0.0;
  adam_step(net, g, state, 0.1);
  REQUIRE(net.weights()[0](0, 0) == Catch::Approx(-0.1).epsilon(1e-6));
  REQUIRE(state.step == 1);
}

TEST_CASE("constant gradient drives the parameter down monotonically") {
  DenseNet net({1, 1});
  net.weights()[0](0, 0) = 1.0;
  AdamState state;
  state.init_like(net);
  DenseNet::Grads g;
  g.init_like(net);
  g.dW[0](0, 0) = 0.7;
  double prev = net.weights()[0](0, 0);
  for (int t = 0; t < 50; ++t) {
    adam_step(net, g, state, 0.01);
    REQUIRE(net.weights()[0](0, 0) < prev);
    prev = net.weights()[0](0, 0);
  }
}

TEST_CASE("adam with lr=0 is the identity") {
  Rng rng(9);
  DenseNet net({3, 5, 2}, rng);
  const std::uint64_t before = net.parameter_hash();
  AdamState state;
  state.init_like(net);
  DenseNet::Grads g;
  g.init_like(net);
  for (auto& w : g.dW) w.setConstant(0.3);
  adam_step(net, g, state, 0.0);
  REQUIRE(net.parameter_hash() == before);
}

TEST_CASE("adam rejects non-finite gradients naming the layer") {
  Rng rng(13);
  DenseNet net({2, 3, 1}, rng);
  AdamState state;
  state.init_like(net);
  DenseNet::Grads g;
  g.init_like(net);
  g.dW[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(net, g, state, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(e.layer == 1);
  }
}

TEST_CASE("grad_check on x^2 at x=3") {
  VectorXd p(1), analytic(1);
  p << 3.0;
  analytic << 6.0;
  const double err = grad_check([](const VectorXd& v) { return v(0) * v(0); }, p, analytic);
  REQUIRE(err < 1e-9);
}

TEST_CASE("grad_check reports zero error for a constant function") {
  VectorXd p(3), analytic = VectorXd::Zero(3);
  p << 1.0, -2.0, 0.5;
  const double err = grad_check([](const VectorXd&) { return 4.2; }, p, analytic);
  REQUIRE(err == 0.0);
}

TEST_CASE("gradient clipping rescales to the requested norm") {
  DenseNet net({2, 2});
  DenseNet::Grads g;
  g.init_like(net);
  g.dW[0].setConstant(100.0);
  const double pre = std::sqrt(g.squared_norm());
  clip_grad_norm(g, 10.0);
  REQUIRE(std::sqrt(g.squared_norm()) == Catch::Approx(10.0).epsilon(1e-12));
  REQUIRE(pre > 10.0);
}
