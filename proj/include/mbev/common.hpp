// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mbev {

// Error taxonomy shared across modules. Callers that care about the kind of
// failure switch on `code`; everyone else treats these as std::runtime_error.
enum class Err {
  NoOverlap,
  SameView,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ShapeMismatch,
  NoContext,
  NothingToReconstruct,
  BadConfig,
  MissingCheckpoint,
  SamplingFailed,
};

class MbevError : public std::runtime_error {
 public:
  MbevError(Err code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) {
  throw MbevError(code, msg);
}

#define MBEV_CHECK(cond, code, msg) \
  do {                              \
    if (!(cond)) ::mbev::fail((code), (msg)); \
  } while (0)

// Deterministic RNG. All randomness in the project flows through this type so
// that (seed, config) fully determines datasets, masks, and training runs.
// Distributions are hand-rolled: libstdc++'s are not pinned by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; has_spare_ = false; }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable per-purpose seed derivation so phases don't share streams.
inline uint64_t derive_seed(uint64_t base, uint64_t tag) {
  Rng r(base ^ (0xd1b54a32d192ed03ull * (tag + 1)));
  return r.next_u64();
}

}  // namespace mbev
