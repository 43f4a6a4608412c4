#include "cbdsl/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cbdsl {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

namespace {

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t digest(std::span<const double> a) {
  return fnv1a(reinterpret_cast<const unsigned char*>(a.data()), a.size_bytes());
}

std::uint64_t digest(std::span<const std::size_t> a) {
  std::vector<std::uint64_t> widened(a.begin(), a.end());
  return fnv1a(reinterpret_cast<const unsigned char*>(widened.data()),
               widened.size() * sizeof(std::uint64_t));
}

void HyperParameters::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("hyper.alpha must be > 0");
  if (!(c0 >= 0.0)) throw ConfigError("hyper.c0 must be >= 0");
  if (!(delta_c1 >= 0.0) || !(delta_c2 >= 0.0))
    throw ConfigError("hyper.delta_c1 and hyper.delta_c2 must be >= 0");
  if (batch_size < 1) throw ConfigError("hyper.batch_size must be >= 1");
  if (rounds < 1) throw ConfigError("hyper.rounds must be >= 1");
  if (num_workers < 1) throw ConfigError("hyper.num_workers must be >= 1");
  if (!(verify_tolerance > 0.0)) throw ConfigError("hyper.verify_tolerance must be > 0");
}

Coefficients sample_coefficients(const HyperParameters& h, RngStream& rng) {
  Coefficients c;
  c.c1 = h.delta_c1 * rng.uniform();
  c.c2 = h.delta_c2 * rng.uniform();
  return c;
}

double inertia_schedule(const HyperParameters& h, std::size_t t) {
  if (h.schedule == InertiaSchedule::constant) return h.c0;
  const double frac = static_cast<double>(t) / static_cast<double>(h.rounds);
  return std::max(0.0, h.c0 * (1.0 - frac));
}

}  // namespace cbdsl
