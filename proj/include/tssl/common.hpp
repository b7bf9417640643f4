#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tssl {

// Every failure the library raises carries a short machine-readable code
// ("invalid", "io", "config", "sequencing", "internal") plus a human message.
// The CLI maps codes to exit diagnostics; tests match on them.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const char* code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace tssl

// Stream-style checks: TSSL_CHECK(a == b, "mismatch: " << a << " vs " << b).
#define TSSL_CHECK_CODE(cond, code, msg)            \
  do {                                              \
    if (!(cond)) {                                  \
      std::ostringstream oss_tssl_;                 \
      oss_tssl_ << msg; /* NOLINT */                \
      ::tssl::fail(code, oss_tssl_.str());          \
    }                                               \
  } while (0)

#define TSSL_CHECK(cond, msg) TSSL_CHECK_CODE(cond, "invalid", msg)

namespace tssl {

// splitmix64: the seeding/stream-derivation mixer. Fixed here so that runs
// are reproducible across standard libraries.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from (seed, lane). Used for per-sample,
// per-stage and per-item sub-streams.
inline uint64_t mix_seed(uint64_t seed, uint64_t lane) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (lane + 1));
  return splitmix64(s);
}

// Deterministic PRNG with a fixed algorithm (xoshiro256** seeded via
// splitmix64). Not std::mt19937 so that the byte-for-byte reproducibility
// promise does not depend on the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next() {
    auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Unbiased enough for every n used here.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (cached second value).
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t s_[4] = {};
  double cache_ = 0.0;
  bool has_cache_ = false;
};

// FNV-1a over raw bytes; used for checkpoint/content fingerprints.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v);

// Worker count resolved from the TSSL_THREADS environment variable
// (0 or unset = hardware concurrency).
int resolved_thread_count();

}  // namespace tssl
