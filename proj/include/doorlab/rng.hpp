#pragma once

#include <cmath>
#include <cstdint>

namespace doorlab {

// Keyed counter-style stream: the sequence for (seed, env, episode, salt) is
// independent of how many sibling streams exist or how far they have advanced.
struct RngStream {
  uint64_t state = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static RngStream keyed(uint64_t seed, uint64_t env = 0, uint64_t episode = 0,
                         uint64_t salt = 0) {
    uint64_t h = mix(seed);
    h = mix(h ^ (0xa0761d6478bd642full * (env + 1)));
    h = mix(h ^ (0xe7037ed1a0b428dbull * (episode + 1)));
    h = mix(h ^ (0x8ebc6af09c88c6e3ull * (salt + 1)));
    RngStream s;
    s.state = h;
    return s;
  }

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two uniforms per draw; no caching so draw order is obvious.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // integer in [0, n)
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }
};

}  // namespace doorlab
