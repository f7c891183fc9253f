#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "cdc/common.hpp"

namespace cdc {

// Deterministic RNG with hand-rolled uniform/normal transforms. The standard
// distributions are implementation-defined, which would break the
// bit-reproducibility contract across toolchains; the raw mt19937_64 stream
// is portable, so everything is derived from it explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw Error("uniform_index: n must be positive");
    std::uint64_t mask = ~std::uint64_t(0);
    if (n != 0 && (n & (n - 1)) == 0) return gen_() & (n - 1);
    const std::uint64_t limit = mask - mask % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; the pair cache keeps one draw per two
  // uniforms without changing the consumption order between runs.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// All randomness in a run flows from one master seed through named
// substreams, so that e.g. evaluation rollouts cannot perturb the batch
// sampling sequence.
inline std::uint64_t substream_seed(std::uint64_t master, const std::string& name,
                                    std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(name);
  h = fnv1a64(&master, sizeof(master), h);
  h = fnv1a64(&index, sizeof(index), h);
  // splitmix64 finalizer to spread low-entropy inputs
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

inline Rng substream(std::uint64_t master, const std::string& name,
                     std::uint64_t index = 0) {
  return Rng(substream_seed(master, name, index));
}

}  // namespace cdc
