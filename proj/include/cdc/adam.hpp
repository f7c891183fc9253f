#pragma once

#include <cmath>
#include <vector>

#include "cdc/net.hpp"

namespace cdc {

// Bias-corrected Adam over a DenseNet's parameters.
struct AdamState {
  std::vector<MatrixXd> mW, vW;
  std::vector<VectorXd> mb, vb;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void init_like(const DenseNet& net) {
    const int L = net.n_layers();
    mW.resize(L);
    vW.resize(L);
    mb.resize(L);
    vb.resize(L);
    for (int l = 0; l < L; ++l) {
      mW[l] = MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols());
      vW[l] = mW[l];
      mb[l] = VectorXd::Zero(net.biases()[l].size());
      vb[l] = mb[l];
    }
    step = 0;
  }
};

// One Adam update in place. Throws NumericError naming the first layer with a
// non-finite gradient.
inline void adam_step(DenseNet& net, const DenseNet::Grads& grads, AdamState& state,
                      double lr) {
  const int L = net.n_layers();
  if (int(grads.dW.size()) != L || int(state.mW.size()) != L)
    throw ShapeError("adam_step: gradient/state shape mismatch");
  for (int l = 0; l < L; ++l) {
    if (!grads.dW[l].allFinite() || !grads.db[l].allFinite())
      throw NumericError("non-finite gradient", -1, l);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (int l = 0; l < L; ++l) {
    state.mW[l] = state.beta1 * state.mW[l] + (1.0 - state.beta1) * grads.dW[l];
    state.vW[l] = state.beta2 * state.vW[l] + (1.0 - state.beta2) * grads.dW[l].cwiseProduct(grads.dW[l]);
    state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * grads.db[l];
    state.vb[l] = state.beta2 * state.vb[l] + (1.0 - state.beta2) * grads.db[l].cwiseProduct(grads.db[l]);
    net.weights()[l].array() -=
        lr * (state.mW[l].array() / bc1) / ((state.vW[l].array() / bc2).sqrt() + state.eps);
    net.biases()[l].array() -=
        lr * (state.mb[l].array() / bc1) / ((state.vb[l].array() / bc2).sqrt() + state.eps);
  }
}

// Global L2 gradient-norm clip; returns the pre-clip norm.
inline double clip_grad_norm(DenseNet::Grads& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace cdc
