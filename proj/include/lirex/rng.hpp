#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace lirex {

// Deterministic random source. All draw mappings are implemented by hand so
// that a given seed produces the same stream on every platform and standard
// library; reproducibility of whole pipeline runs depends on this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ULL)) {
    if (state_ == 0) state_ = 0x853c49e6748fea9bULL;  // xorshift state must be nonzero
  }

  // Raw 64-bit draw (xorshift* generator).
  std::uint64_t next() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  // Standard normal via Box-Muller (no cached spare, so the stream
  // position depends only on the number of calls).
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1 = unit();
    double u2 = unit();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derived, statistically independent sub-stream (per stage, per epoch, ...).
  Rng fork(std::uint64_t stream) const { return Rng(splitmix(state_ ^ splitmix(stream))); }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace lirex
