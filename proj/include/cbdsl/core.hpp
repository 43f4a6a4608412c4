#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbdsl/rng.hpp"

namespace cbdsl {

// Thrown for invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when an update produces NaN/Inf parameters.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Execution policy for the data-parallel kernels. Both policies produce
// bitwise-identical results; `serial` is the reference path.
enum class Exec { serial, parallel };

// Dense real vector of fixed length D. The tag keeps parameters and
// velocities from being mixed up at call sites.
template <typename Tag>
struct DenseVector {
  std::vector<double> values;

  DenseVector() = default;
  explicit DenseVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit DenseVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;
};

using ParameterVector = DenseVector<struct ParameterTag>;
using VelocityVector = DenseVector<struct VelocityTag>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a);
// FNV-1a over the raw bytes; used for partition/initialisation digests.
std::uint64_t digest(std::span<const double> a);
std::uint64_t digest(std::span<const std::size_t> a);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class InertiaSchedule { constant, linear };

struct HyperParameters {
  double c0 = 1.0;
  double delta_c1 = 1.0;
  double delta_c2 = 1.0;
  double alpha = 0.005;
  std::size_t batch_size = 10;
  std::size_t rounds = 100;
  std::size_t num_workers = 50;
  double verify_tolerance = 1e-9;
  std::uint64_t seed = 1;
  InertiaSchedule schedule = InertiaSchedule::constant;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

struct Coefficients {
  double c1 = 0.0;
  double c2 = 0.0;
};

// One scalar pair per worker per round: c1 ~ U[0, delta_c1), c2 ~ U[0, delta_c2).
Coefficients sample_coefficients(const HyperParameters& h, RngStream& rng);

// Inertia weight for round t; linear mode decays c0 to zero over T rounds.
double inertia_schedule(const HyperParameters& h, std::size_t t);

}  // namespace cbdsl
