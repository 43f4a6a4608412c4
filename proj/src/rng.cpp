#include "cbdsl/rng.hpp"

#include <stdexcept>

namespace cbdsl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t seed, Stream purpose, std::uint64_t worker,
                            std::uint64_t round) {
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ static_cast<std::uint64_t>(purpose));
  key = splitmix64(key ^ (worker + 0x632be59bd9b4e019ULL));
  key = splitmix64(key ^ (round + 0x8cb92ba72f3d8dd7ULL));
  return RngStream(key);
}

double RngStream::uniform() {
  // 53 random mantissa bits, exact on every platform.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace cbdsl
