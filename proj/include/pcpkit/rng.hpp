#ifndef PCPKIT_RNG_HPP_
#define PCPKIT_RNG_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pcpkit {

// Every randomized routine derives its own stream from a caller seed plus a
// stable label, so reports are byte-identical given identical flags.  The
// mixing function is fixed here and documented in the README:
//
//   child_seed = splitmix64(parent_seed ^ fnv1a64(label))
//
// Bounded draws avoid std::uniform_int_distribution on purpose: its mapping
// from raw engine output is implementation defined, which would break
// cross-toolchain determinism.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t parent, std::string_view label) {
  return splitmix64(parent ^ fnv1a64(label));
}

inline std::uint64_t mix_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 0x9e3779b97f4a7c15ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits64() { return engine_(); }

  // Uniform in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    // Rejection sampling on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  std::uint64_t range(std::uint64_t lo, std::uint64_t hi_inclusive) {
    return lo + below(hi_inclusive - lo + 1);
  }

  // Uniform word with the low `n` bits random, the rest zero.
  std::uint64_t word(std::size_t n) {
    if (n == 0) return 0;
    return engine_() >> (64 - n);
  }

  bool coin() { return (engine_() >> 63) != 0; }

  // Uniform double in [0,1) with 53 random bits.
  double real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Stream factory that remembers its own seed, so children can be derived
// by label without keeping the parent seed around at call sites.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }
  SeedTree child(std::string_view label) const {
    return SeedTree(mix_seed(seed_, label));
  }
  SeedTree child(std::uint64_t index) const {
    return SeedTree(mix_seed(seed_, index));
  }
  Rng rng() const { return Rng(seed_); }

 private:
  std::uint64_t seed_;
};

}  // namespace pcpkit

#endif
