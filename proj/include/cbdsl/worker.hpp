#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <vector>

#include "cbdsl/core.hpp"

namespace cbdsl {

struct WorkerState {
  std::size_t id = 0;
  ParameterVector w;
  VelocityVector v;
  ParameterVector w_p;        // historical best on the scoring set
  double F_p = kInfinity;     // score of w_p; non-increasing
  std::vector<std::size_t> train_pool;  // local partition, plus shared training data if enabled
  std::vector<std::size_t> local;       // local partition only
  bool is_byzantine = false;
};

struct PsState {
  std::optional<ParameterVector> w_g;  // empty until the first accepted upload
  double F_g = kInfinity;
  std::size_t round = 0;
  std::set<std::size_t> blacklist;
};

// Scalar uplink: a worker's claimed historical-best score.
struct ScalarReport {
  std::size_t worker = 0;
  double claimed = kInfinity;
};

struct CommLedger {
  std::size_t scalars_up = 0;
  std::size_t vectors_up = 0;
  std::size_t broadcasts = 0;

  CommLedger& operator+=(const CommLedger& o) {
    scalars_up += o.scalars_up;
    vectors_up += o.vectors_up;
    broadcasts += o.broadcasts;
    return *this;
  }
};

}  // namespace cbdsl
