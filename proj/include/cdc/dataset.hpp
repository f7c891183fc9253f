#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <sstream>
#include <string>
#include <vector>

#include "cdc/common.hpp"
#include "cdc/rng.hpp"

namespace cdc {

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s2;
  bool terminal = false;
  bool truncated = false;
  bool episode_start = false;
};

// The offline transition store. Columnar, immutable after load.
//
// Binary layout (little-endian), version 1:
//   magic "CDCD" | u32 version
//   u32 name_len | name bytes | u32 ds | u32 da | u64 n
//   f64 s[n*ds] | f64 a[n*da] | f64 r[n] | f64 s2[n*ds]
//   u8 terminal[n] | u8 truncated[n] | u8 episode_start[n]
//   u64 fnv1a checksum of everything between the version field and here
struct TransitionDataset {
  std::string env_name;
  int ds = 0;
  int da = 0;
  // row-major: states(i, :) is the i-th state
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;
  std::vector<std::uint8_t> episode_start;

  long size() const { return rewards.size(); }

  Transition row(long i) const {
    Transition t;
    t.s = states.row(i).transpose();
    t.a = actions.row(i).transpose();
    t.r = rewards(i);
    t.s2 = next_states.row(i).transpose();
    t.terminal = terminal[std::size_t(i)] != 0;
    t.truncated = truncated[std::size_t(i)] != 0;
    t.episode_start = episode_start[std::size_t(i)] != 0;
    return t;
  }

  void validate() const {
    const long n = size();
    if (n < 1) throw FormatError("dataset must hold at least one transition");
    if (states.rows() != n || actions.rows() != n || next_states.rows() != n ||
        long(terminal.size()) != n || long(truncated.size()) != n ||
        long(episode_start.size()) != n)
      throw ShapeError("dataset columns disagree on length");
    if (states.cols() != ds || next_states.cols() != ds || actions.cols() != da)
      throw ShapeError("dataset column width disagrees with header dims");
    if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite() ||
        !next_states.allFinite())
      throw NumericError("dataset contains non-finite entries");
    if ((actions.array().abs() > 1.0 + 1e-6).any())
      throw FormatError("dataset action outside the [-1,1] box");
  }

  // Mean undiscounted return per episode, using the episode_start flags to
  // delimit episodes. The trailing partial episode counts as one episode.
  double average_episode_return() const {
    double total = rewards.sum();
    long episodes = 0;
    for (std::uint8_t f : episode_start) episodes += f ? 1 : 0;
    if (episodes == 0) episodes = 1;
    return total / double(episodes);
  }
};

inline constexpr char kDatasetMagic[5] = "CDCD";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const TransitionDataset& d) {
  d.validate();
  std::string payload;
  const long n = d.size();
  payload.reserve(std::size_t(n) * std::size_t(8 * (2 * d.ds + d.da + 1) + 3) + 64);
  le::put_u32(payload, std::uint32_t(d.env_name.size()));
  payload += d.env_name;
  le::put_u32(payload, std::uint32_t(d.ds));
  le::put_u32(payload, std::uint32_t(d.da));
  le::put_u64(payload, std::uint64_t(n));
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.ds; ++j) le::put_f64(payload, d.states(i, j));
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.da; ++j) le::put_f64(payload, d.actions(i, j));
  for (long i = 0; i < n; ++i) le::put_f64(payload, d.rewards(i));
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.ds; ++j) le::put_f64(payload, d.next_states(i, j));
  for (long i = 0; i < n; ++i) le::put_u8(payload, d.terminal[std::size_t(i)]);
  for (long i = 0; i < n; ++i) le::put_u8(payload, d.truncated[std::size_t(i)]);
  for (long i = 0; i < n; ++i) le::put_u8(payload, d.episode_start[std::size_t(i)]);

  std::string out;
  out.reserve(payload.size() + 16);
  out.append(kDatasetMagic, 4);
  le::put_u32(out, kDatasetVersion);
  out += payload;
  le::put_u64(out, fnv1a64(payload.data(), payload.size()));
  return out;
}

inline void save_dataset(const TransitionDataset& d, const std::string& path) {
  write_file(path, serialize_dataset(d));
}

inline TransitionDataset parse_dataset(const std::string& raw) {
  if (raw.size() < 16 || raw.compare(0, 4, kDatasetMagic, 4) != 0)
    throw FormatError("not a dataset file (bad magic)");
  le::Reader r{raw, 4};
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset format version " + std::to_string(version));
  const std::size_t payload_begin = r.pos;

  TransitionDataset d;
  const std::uint32_t name_len = r.u32();
  d.env_name = r.bytes(name_len);
  d.ds = int(r.u32());
  d.da = int(r.u32());
  const auto n = long(r.u64());
  if (n < 1 || d.ds < 1 || d.da < 1) throw FormatError("dataset header out of range");
  d.states.resize(n, d.ds);
  d.actions.resize(n, d.da);
  d.rewards.resize(n);
  d.next_states.resize(n, d.ds);
  d.terminal.resize(std::size_t(n));
  d.truncated.resize(std::size_t(n));
  d.episode_start.resize(std::size_t(n));
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.ds; ++j) d.states(i, j) = r.f64();
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.da; ++j) d.actions(i, j) = r.f64();
  for (long i = 0; i < n; ++i) d.rewards(i) = r.f64();
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d.ds; ++j) d.next_states(i, j) = r.f64();
  for (long i = 0; i < n; ++i) d.terminal[std::size_t(i)] = r.u8();
  for (long i = 0; i < n; ++i) d.truncated[std::size_t(i)] = r.u8();
  for (long i = 0; i < n; ++i) d.episode_start[std::size_t(i)] = r.u8();
  const std::size_t payload_end = r.pos;
  const std::uint64_t stored = r.u64();
  const std::uint64_t computed =
      fnv1a64(raw.data() + payload_begin, payload_end - payload_begin);
  if (stored != computed) throw FormatError("dataset checksum mismatch");
  d.validate();
  return d;
}

inline TransitionDataset load_dataset(const std::string& path) {
  return parse_dataset(read_file(path));
}

// CSV import: one transition per row, columns
//   s_0..s_{ds-1}, a_0..a_{da-1}, r, s2_0..s2_{ds-1}, terminal, truncated, episode_start
// A non-numeric first field on the first line is treated as a header row.
inline TransitionDataset import_csv(const std::string& path, const std::string& env_name,
                                    int ds, int da) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  const int want = 2 * ds + da + 4;
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (first) {
      first = false;
      char* end = nullptr;
      std::strtod(fields[0].c_str(), &end);
      if (end == fields[0].c_str()) continue;  // header row
    }
    if (int(fields.size()) != want)
      throw FormatError("csv row has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(want));
    std::vector<double> row;
    row.reserve(std::size_t(want));
    for (const auto& s : fields) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str()) throw FormatError("csv field is not numeric: " + s);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("csv contains no transitions");

  TransitionDataset d;
  d.env_name = env_name;
  d.ds = ds;
  d.da = da;
  const auto n = long(rows.size());
  d.states.resize(n, ds);
  d.actions.resize(n, da);
  d.rewards.resize(n);
  d.next_states.resize(n, ds);
  d.terminal.resize(std::size_t(n));
  d.truncated.resize(std::size_t(n));
  d.episode_start.resize(std::size_t(n));
  for (long i = 0; i < n; ++i) {
    const auto& row = rows[std::size_t(i)];
    int k = 0;
    for (int j = 0; j < ds; ++j) d.states(i, j) = row[std::size_t(k++)];
    for (int j = 0; j < da; ++j) d.actions(i, j) = row[std::size_t(k++)];
    d.rewards(i) = row[std::size_t(k++)];
    for (int j = 0; j < ds; ++j) d.next_states(i, j) = row[std::size_t(k++)];
    d.terminal[std::size_t(i)] = row[std::size_t(k++)] != 0.0;
    d.truncated[std::size_t(i)] = row[std::size_t(k++)] != 0.0;
    d.episode_start[std::size_t(i)] = row[std::size_t(k++)] != 0.0;
  }
  d.validate();
  return d;
}

// Uniform-with-replacement minibatch indices; deterministic per rng state.
inline std::vector<long> sample_minibatch_indices(const TransitionDataset& d, long size,
                                                  Rng& rng) {
  if (d.size() < 1) throw Error("sample_minibatch: empty dataset");
  if (size < 1) throw Error("sample_minibatch: size must be positive");
  std::vector<long> idx(static_cast<std::size_t>(size));
  for (auto& i : idx) i = long(rng.uniform_index(std::uint64_t(d.size())));
  return idx;
}

// Minibatch gathered into dense blocks for batched net evaluation.
struct Batch {
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
  Eigen::VectorXd r;
  Eigen::MatrixXd s2;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;
  long size() const { return r.size(); }
};

inline Batch gather_batch(const TransitionDataset& d, const std::vector<long>& idx) {
  Batch b;
  const auto n = long(idx.size());
  b.s.resize(n, d.ds);
  b.a.resize(n, d.da);
  b.r.resize(n);
  b.s2.resize(n, d.ds);
  b.terminal.resize(std::size_t(n));
  b.truncated.resize(std::size_t(n));
  for (long i = 0; i < n; ++i) {
    const long j = idx[std::size_t(i)];
    b.s.row(i) = d.states.row(j);
    b.a.row(i) = d.actions.row(j);
    b.r(i) = d.rewards(j);
    b.s2.row(i) = d.next_states.row(j);
    b.terminal[std::size_t(i)] = d.terminal[std::size_t(j)];
    b.truncated[std::size_t(i)] = d.truncated[std::size_t(j)];
  }
  return b;
}

inline Batch sample_minibatch(const TransitionDataset& d, long size, Rng& rng) {
  return gather_batch(d, sample_minibatch_indices(d, size, rng));
}

// score = 100 * (raw - random) / (expert - random)
inline double normalized_score(double raw, double random_score, double expert_score) {
  if (expert_score == random_score)
    throw DegenerateReferenceError("expert and random reference scores coincide");
  return 100.0 * (raw - random_score) / (expert_score - random_score);
}

}  // namespace cdc
