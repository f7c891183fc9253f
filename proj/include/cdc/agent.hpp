#pragma once

#include "cdc/ensemble.hpp"
#include "cdc/policy.hpp"

namespace cdc {

// Trained policy + critic ensemble, the unit that checkpoints and evaluation
// operate on.
struct Agent {
  GaussianPolicy policy;
  QEnsemble critics;
  int state_dim = 0;
  int action_dim = 0;

  Eigen::VectorXd select(const Eigen::VectorXd& state, int n_candidates, Rng& rng) const {
    return select_action(policy, critics, state, n_candidates, rng);
  }
};

inline Agent make_agent(int state_dim, int action_dim, int ensemble_size, double nu,
                        const std::vector<int>& hidden, std::uint64_t seed) {
  Rng rng = substream(seed, "init");
  Agent a;
  a.state_dim = state_dim;
  a.action_dim = action_dim;
  a.policy = GaussianPolicy(state_dim, action_dim, hidden, rng);
  a.critics = QEnsemble(state_dim, action_dim, ensemble_size, nu, hidden, rng);
  return a;
}

// Checkpoint layout (little-endian), version 1:
//   magic "CDCA" | u32 version | u32 ds | u32 da | u32 M | f64 nu
//   u32 policy_n_sizes | u32 sizes... | u32 q_n_sizes | u32 sizes...
//   policy params | M online nets | M target nets
//   (per net, per layer: W row-major then b, f64 each)
//   u64 fnv1a checksum of everything between the version field and here
inline constexpr char kAgentMagic[5] = "CDCA";
inline constexpr std::uint32_t kAgentVersion = 1;

namespace detail {

inline void put_net_params(std::string& out, const DenseNet& net) {
  for (int l = 0; l < net.n_layers(); ++l) {
    const auto& W = net.weights()[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) le::put_f64(out, W(i, j));
    const auto& b = net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) le::put_f64(out, b(i));
  }
}

inline void read_net_params(le::Reader& r, DenseNet& net) {
  for (int l = 0; l < net.n_layers(); ++l) {
    auto& W = net.weights()[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = r.f64();
    auto& b = net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = r.f64();
  }
}

}  // namespace detail

inline std::string serialize_agent(const Agent& a) {
  std::string payload;
  le::put_u32(payload, std::uint32_t(a.state_dim));
  le::put_u32(payload, std::uint32_t(a.action_dim));
  le::put_u32(payload, std::uint32_t(a.critics.size()));
  le::put_f64(payload, a.critics.nu());
  const auto& psizes = a.policy.net().layer_sizes();
  le::put_u32(payload, std::uint32_t(psizes.size()));
  for (int s : psizes) le::put_u32(payload, std::uint32_t(s));
  const auto& qsizes = a.critics.online()[0].layer_sizes();
  le::put_u32(payload, std::uint32_t(qsizes.size()));
  for (int s : qsizes) le::put_u32(payload, std::uint32_t(s));
  detail::put_net_params(payload, a.policy.net());
  for (const auto& net : a.critics.online()) detail::put_net_params(payload, net);
  for (const auto& net : a.critics.target()) detail::put_net_params(payload, net);

  std::string out;
  out.append(kAgentMagic, 4);
  le::put_u32(out, kAgentVersion);
  out += payload;
  le::put_u64(out, fnv1a64(payload.data(), payload.size()));
  return out;
}

inline void save_agent(const Agent& a, const std::string& path) {
  write_file(path, serialize_agent(a));
}

inline Agent parse_agent(const std::string& raw) {
  if (raw.size() < 16 || raw.compare(0, 4, kAgentMagic, 4) != 0)
    throw FormatError("not an agent checkpoint (bad magic)");
  le::Reader r{raw, 4};
  const std::uint32_t version = r.u32();
  if (version != kAgentVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::size_t payload_begin = r.pos;

  Agent a;
  a.state_dim = int(r.u32());
  a.action_dim = int(r.u32());
  const int M = int(r.u32());
  const double nu = r.f64();
  auto read_sizes = [&r]() {
    const std::uint32_t n = r.u32();
    if (n < 2 || n > 64) throw FormatError("checkpoint layer-size list out of range");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = int(r.u32());
    return sizes;
  };
  const auto psizes = read_sizes();
  const auto qsizes = read_sizes();
  DenseNet pol_net(psizes);
  detail::read_net_params(r, pol_net);
  a.policy = GaussianPolicy(std::move(pol_net), a.action_dim);
  std::vector<int> hidden(qsizes.begin() + 1, qsizes.end() - 1);
  Rng dummy(0);
  a.critics = QEnsemble(a.state_dim, a.action_dim, M, nu, hidden, dummy);
  for (auto& net : a.critics.online()) detail::read_net_params(r, net);
  for (auto& net : a.critics.target()) detail::read_net_params(r, net);

  const std::size_t payload_end = r.pos;
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a64(raw.data() + payload_begin, payload_end - payload_begin))
    throw FormatError("checkpoint checksum mismatch");
  return a;
}

inline Agent load_agent(const std::string& path) { return parse_agent(read_file(path)); }

}  // namespace cdc
