#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace eqmap {

// Deterministic counter-based generator (SplitMix64). The same seed yields
// the same stream on every platform; streams for unrelated purposes are
// derived with fork() so draw order in one place never shifts another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard normal via Box-Muller; fixed two-draw consumption
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // [0, n)
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  bool next_bool() { return (next_u64() & 1u) != 0; }

  // Independent stream keyed on (original seed, label); unaffected by how
  // many values this instance has produced.
  Rng fork(std::string_view label) const { return Rng(hash_label(seed_, label)); }

  static uint64_t hash_label(uint64_t seed, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // final avalanche so nearby labels give unrelated seeds
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace eqmap
