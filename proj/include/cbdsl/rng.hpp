#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace cbdsl {

// Independent purposes a stream can be derived for. Values are part of the
// key derivation and must never be renumbered.
enum class Stream : std::uint64_t {
  init = 1,
  coefficients = 2,
  batch = 3,
  attack = 4,
  partition = 5,
  global_shared = 6,
  synthetic = 7,
  lipschitz = 8,
  pso = 9,
  test_split = 10,
};

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random stream keyed by (seed, purpose, worker, round).
// Streams with distinct keys share no state, so draws do not depend on the
// order in which workers are evaluated.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : engine_(key) {}

  static RngStream derive(std::uint64_t seed, Stream purpose, std::uint64_t worker = 0,
                          std::uint64_t round = 0);

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  std::size_t index(std::size_t n);  // [0, n)

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cbdsl
