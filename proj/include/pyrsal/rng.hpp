#pragma once

#include <cmath>
#include <cstdint>

namespace pyrsal {

// PCG32 (XSH-RR). Self-contained so that generated datasets and weight init
// are byte-identical across standard libraries and platforms.
struct Pcg32 {
  std::uint64_t state = 0;
  std::uint64_t inc = 0;

  explicit Pcg32(std::uint64_t seed = 0, std::uint64_t stream = 0) {
    inc = (stream << 1u) | 1u;
    state = 0;
    next();
    state += seed;
    next();
  }

  std::uint32_t next() {
    std::uint64_t old = state;
    state = old * 6364136223846793005ULL + inc;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // [0, 1)
  double uniform() { return (next() >> 8) * 0x1.0p-24; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range; modulo bias is irrelevant at our range sizes
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next() % static_cast<std::uint32_t>(hi - lo + 1));
  }

  bool coin(double p = 0.5) { return uniform() < p; }

  // Box-Muller, one value per call (partner cached)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace pyrsal
