#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qi {

// splitmix64; used to derive independent child seeds from a root seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed splitting: every consumer of randomness derives its own
// stream from (root, tag...), so results are reproducible regardless of
// evaluation order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) {
  return splitmix64(root ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag1, std::uint64_t tag2) {
  return derive_seed(derive_seed(root, tag1), tag2);
}

// mt19937_64 stream with explicit uniform/normal transforms (the standard
// distributions are implementation-defined; these are pinned).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = u01();
    while (u1 <= 0.0) u1 = u01();
    const double u2 = u01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(6.283185307179586477 * u2);
    have_spare_ = true;
    return r * std::cos(6.283185307179586477 * u2);
  }

  std::uint64_t bits() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qi
