#pragma once

#include <cstddef>
#include <set>
#include <string>

#include "cbdsl/core.hpp"
#include "cbdsl/worker.hpp"

namespace cbdsl {

enum class AttackStrategy { none, fake_loss_garbage, fake_loss_scaled };

AttackStrategy parse_attack_strategy(const std::string& name);
std::string to_string(AttackStrategy s);

struct AttackSpec {
  std::set<std::size_t> attackers;
  AttackStrategy strategy = AttackStrategy::none;
  double scale = 10.0;  // fake_loss_scaled uploads -scale * w_p

  bool is_attacker(std::size_t id) const {
    return strategy != AttackStrategy::none && attackers.contains(id);
  }
};

// Claims min(true claim, known best) * 0.5 - 0.01 so the forger undercuts every
// honest claim; `none` passes the report through.
ScalarReport forge_report(const ScalarReport& honest, double known_best, AttackStrategy strategy);

// Payload sent when the forger is invited: uniform noise in [-1, 1]^D for
// fake_loss_garbage, -scale * w_p for fake_loss_scaled, the true w_p otherwise.
ParameterVector forge_upload(const WorkerState& state, AttackStrategy strategy, double scale,
                             RngStream& rng);

}  // namespace cbdsl
