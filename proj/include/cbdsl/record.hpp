#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>

namespace cbdsl {

// Per-round metrics of one (variant, seed) run. Round r describes the state
// after r protocol rounds.
struct RoundRecord {
  std::size_t round = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double f_g = std::numeric_limits<double>::infinity();
  double train_loss_mean = 0.0;
  double train_loss_min = 0.0;
  double train_loss_max = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t scalar_uplinks = 0;
  std::size_t vector_uplinks = 0;
  std::size_t vector_broadcasts = 0;
  std::size_t detections = 0;
  double mean_model_divergence = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace cbdsl
