#include "fedhpo/rng.hpp"

#include <cmath>
#include <numbers>

namespace fedhpo {

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(master);
  for (unsigned char c : purpose) {
    h = splitmix64(h ^ c);
  }
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // 1 - u keeps the log argument strictly positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

}  // namespace fedhpo
