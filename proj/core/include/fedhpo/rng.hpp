#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fedhpo {

// splitmix64 mixing step; used for seed derivation only.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable fan-out of a master seed into independent sub-seeds. Every module
// derives its stream as derive_seed(master, purpose, a, b), so results do not
// depend on execution order or interleaving.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::uint64_t a = 0, std::uint64_t b = 0);

// Deterministic generator with explicit draw algorithms. The standard
// distributions are implementation-defined, so shuffles and variates go
// through this type to keep runs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Unbiased integer in [0, n) by rejection sampling.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal();

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

inline Rng make_rng(std::uint64_t master, std::string_view purpose,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, purpose, a, b));
}

// Identity permutation 0..n-1 shuffled by rng.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace fedhpo
