#include "cbdsl/attacks.hpp"

#include <algorithm>

namespace cbdsl {

AttackStrategy parse_attack_strategy(const std::string& name) {
  if (name == "none") return AttackStrategy::none;
  if (name == "fake_loss_garbage") return AttackStrategy::fake_loss_garbage;
  if (name == "fake_loss_scaled") return AttackStrategy::fake_loss_scaled;
  throw ConfigError("unknown attack strategy '" + name + "'");
}

std::string to_string(AttackStrategy s) {
  switch (s) {
    case AttackStrategy::none: return "none";
    case AttackStrategy::fake_loss_garbage: return "fake_loss_garbage";
    case AttackStrategy::fake_loss_scaled: return "fake_loss_scaled";
  }
  return "none";
}

ScalarReport forge_report(const ScalarReport& honest, double known_best, AttackStrategy strategy) {
  if (strategy == AttackStrategy::none) return honest;
  ScalarReport forged = honest;
  forged.claimed = std::min(honest.claimed, known_best) * 0.5 - 0.01;
  return forged;
}

ParameterVector forge_upload(const WorkerState& state, AttackStrategy strategy, double scale,
                             RngStream& rng) {
  switch (strategy) {
    case AttackStrategy::none:
      return state.w_p;
    case AttackStrategy::fake_loss_garbage: {
      ParameterVector out(state.w_p.size());
      for (double& x : out.values) x = rng.uniform(-1.0, 1.0);
      return out;
    }
    case AttackStrategy::fake_loss_scaled: {
      ParameterVector out = state.w_p;
      for (double& x : out.values) x *= -scale;
      return out;
    }
  }
  return state.w_p;
}

}  // namespace cbdsl
