#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "cdc/common.hpp"
#include "cdc/rng.hpp"

namespace cdc {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Fully connected net: ReLU on hidden layers, identity on the output layer.
// Weights are stored out-by-in; batches are row-major (one sample per row).
// All arithmetic is 64-bit.
class DenseNet {
 public:
  DenseNet() = default;

  // Zero-initialized; used when parameters are loaded from a checkpoint.
  explicit DenseNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    check_sizes();
    const int L = n_layers();
    W_.resize(L);
    b_.resize(L);
    for (int l = 0; l < L; ++l) {
      W_[l] = MatrixXd::Zero(sizes_[l + 1], sizes_[l]);
      b_[l] = VectorXd::Zero(sizes_[l + 1]);
    }
  }

  // layer_sizes = {input, hidden..., output}; weights and biases drawn
  // uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  DenseNet(std::vector<int> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
    check_sizes();
    const int L = n_layers();
    W_.resize(L);
    b_.resize(L);
    for (int l = 0; l < L; ++l) {
      const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
      const double bound = 1.0 / std::sqrt(double(fan_in));
      W_[l].resize(fan_out, fan_in);
      b_[l].resize(fan_out);
      for (int i = 0; i < fan_out; ++i)
        for (int j = 0; j < fan_in; ++j) W_[l](i, j) = rng.uniform(-bound, bound);
      for (int i = 0; i < fan_out; ++i) b_[l](i) = rng.uniform(-bound, bound);
    }
  }

  int n_layers() const { return int(sizes_.size()) - 1; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  std::vector<MatrixXd>& weights() { return W_; }
  std::vector<VectorXd>& biases() { return b_; }
  const std::vector<MatrixXd>& weights() const { return W_; }
  const std::vector<VectorXd>& biases() const { return b_; }

  // Activations kept from a forward pass; batch_backward consumes them.
  struct Cache {
    std::vector<MatrixXd> act;  // act[0] = input, act[l+1] = output of layer l
  };

  MatrixXd batch_forward(const MatrixXd& X, Cache* cache = nullptr) const {
    if (X.cols() != input_dim())
      throw ShapeError("forward: input has " + std::to_string(X.cols()) +
                       " columns, net expects " + std::to_string(input_dim()));
    if (cache) {
      cache->act.clear();
      cache->act.reserve(std::size_t(n_layers()) + 1);
      cache->act.push_back(X);
    }
    MatrixXd a = X;
    const int L = n_layers();
    for (int l = 0; l < L; ++l) {
      MatrixXd z = (a * W_[l].transpose()).rowwise() + b_[l].transpose();
      if (l + 1 < L) z = z.cwiseMax(0.0);
      if (cache) cache->act.push_back(z);
      a = std::move(z);
    }
    return a;
  }

  VectorXd forward(const VectorXd& x) const {
    MatrixXd out = batch_forward(x.transpose());
    return out.row(0).transpose();
  }

  struct Grads {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;

    void init_like(const DenseNet& net) {
      dW.resize(net.n_layers());
      db.resize(net.n_layers());
      for (int l = 0; l < net.n_layers(); ++l) {
        dW[l] = MatrixXd::Zero(net.W_[l].rows(), net.W_[l].cols());
        db[l] = VectorXd::Zero(net.b_[l].size());
      }
    }

    void scale(double s) {
      for (auto& m : dW) m *= s;
      for (auto& v : db) v *= s;
    }

    double squared_norm() const {
      double n = 0;
      for (const auto& m : dW) n += m.squaredNorm();
      for (const auto& v : db) n += v.squaredNorm();
      return n;
    }
  };

  // Reverse-mode pass for sum_rows <upstream_i, net(x_i)>. Parameter
  // gradients accumulate into `grads` (summed over the batch); pass
  // `input_grads` to also get d/dX. `accumulate_params=false` lets callers
  // reuse a backward purely for input gradients.
  void batch_backward(const Cache& cache, const MatrixXd& upstream, Grads* grads,
                      MatrixXd* input_grads = nullptr) const {
    const int L = n_layers();
    if (int(cache.act.size()) != L + 1) throw ShapeError("backward: stale cache");
    if (upstream.rows() != cache.act[0].rows() || upstream.cols() != output_dim())
      throw ShapeError("backward: upstream shape mismatch");
    MatrixXd delta = upstream;
    for (int l = L - 1; l >= 0; --l) {
      if (l + 1 < L) {
        // ReLU derivative: pass where the stored post-activation is positive
        delta = delta.cwiseProduct((cache.act[std::size_t(l) + 1].array() > 0.0).cast<double>().matrix());
      }
      if (grads) {
        grads->dW[l].noalias() += delta.transpose() * cache.act[std::size_t(l)];
        grads->db[l].noalias() += delta.colwise().sum().transpose();
      }
      if (l > 0 || input_grads) {
        MatrixXd prev = delta * W_[l];
        if (l == 0 && input_grads) *input_grads = std::move(prev);
        else delta = std::move(prev);
      }
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) n += std::size_t(W_[l].size()) + std::size_t(b_[l].size());
    return n;
  }

  void flatten(VectorXd& out) const {
    out.resize(Eigen::Index(parameter_count()));
    Eigen::Index k = 0;
    for (int l = 0; l < n_layers(); ++l) {
      for (Eigen::Index i = 0; i < W_[l].size(); ++i) out(k++) = W_[l].data()[i];
      for (Eigen::Index i = 0; i < b_[l].size(); ++i) out(k++) = b_[l](i);
    }
  }

  void unflatten(const VectorXd& in) {
    if (std::size_t(in.size()) != parameter_count()) throw ShapeError("unflatten: size mismatch");
    Eigen::Index k = 0;
    for (int l = 0; l < n_layers(); ++l) {
      for (Eigen::Index i = 0; i < W_[l].size(); ++i) W_[l].data()[i] = in(k++);
      for (Eigen::Index i = 0; i < b_[l].size(); ++i) b_[l](i) = in(k++);
    }
  }

  std::uint64_t parameter_hash() const {
    std::uint64_t h = kFnvOffset;
    for (int l = 0; l < n_layers(); ++l) {
      h = fnv1a64(W_[l].data(), sizeof(double) * std::size_t(W_[l].size()), h);
      h = fnv1a64(b_[l].data(), sizeof(double) * std::size_t(b_[l].size()), h);
    }
    return h;
  }

 private:
  void check_sizes() const {
    if (sizes_.size() < 2) throw ShapeError("DenseNet needs at least input and output sizes");
    for (int s : sizes_)
      if (s <= 0) throw ShapeError("DenseNet layer sizes must be positive");
  }

  std::vector<int> sizes_;
  std::vector<MatrixXd> W_;
  std::vector<VectorXd> b_;
};

inline std::vector<int> default_hidden_layers() { return {256, 256, 256, 256}; }

inline std::vector<int> make_layer_sizes(int input_dim, const std::vector<int>& hidden,
                                         int output_dim) {
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  return sizes;
}

}  // namespace cdc
