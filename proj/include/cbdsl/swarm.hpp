#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cbdsl/attacks.hpp"
#include "cbdsl/core.hpp"
#include "cbdsl/data.hpp"
#include "cbdsl/model.hpp"
#include "cbdsl/worker.hpp"

namespace cbdsl {

struct TrainingContext {
  const ModelSpec* spec = nullptr;
  const Dataset* data = nullptr;
  std::uint64_t seed = 0;
};

struct SwarmUpdate {
  ParameterVector w;
  VelocityVector v;
};

// w' = w + c0 v + c1 (w_p - w) + c2 (w_g - w) - alpha * grad,  v' = w' - w.
SwarmUpdate swarm_update(const ParameterVector& w, const VelocityVector& v, const ParameterVector& w_p,
                         const ParameterVector& w_g, double c0, double c1, double c2, double alpha,
                         const ParameterVector& grad);

// Inputs consumed by one worker step, kept for the diagnostics.
struct StepTrace {
  std::size_t worker = 0;
  std::size_t round = 0;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double batch_loss = 0.0;
  ParameterVector w_before;
  VelocityVector v_before;
  ParameterVector w_p;
  ParameterVector w_g;  // effective global best (the worker's own w when none exists yet)
  ParameterVector gradient;
};

// One CB-DSL local update for round t. The gradient is a mini-batch estimate
// at the pre-update w over the worker's training pool. Without a global best
// the social term is suppressed. Throws NumericError on non-finite results.
void worker_step(WorkerState& state, const ParameterVector* global_best, const HyperParameters& h,
                 const TrainingContext& ctx, std::size_t t, StepTrace* trace = nullptr);

// Scores w on `score_set`; strictly better scores replace (F_p, w_p).
ScalarReport score_and_update_best(WorkerState& state, const SampleView& score_set,
                                   const ModelSpec& spec, Exec exec = Exec::serial);

// Lowest claim (ties to the lowest worker id) among non-blacklisted reports;
// returned only if it beats ps.F_g.
std::optional<std::size_t> select_global_best(std::span<const ScalarReport> reports, const PsState& ps);

enum class Verdict { accepted, byzantine };

Verdict verify_upload(const ParameterVector& upload, double claimed, const SampleView& score_set,
                      const ModelSpec& spec, double tolerance, Exec exec = Exec::serial);

enum class ScoreSource { shared, local };

struct RoundConfig {
  const ModelSpec* spec = nullptr;
  const Dataset* data = nullptr;
  HyperParameters h;
  std::span<const std::size_t> score_set;  // used when score_source == shared
  ScoreSource score_source = ScoreSource::shared;
  bool verify = true;
  AttackSpec attack;
  Exec exec = Exec::serial;
  bool keep_traces = false;
};

struct RoundOutcome {
  CommLedger ledger;
  std::size_t detections = 0;
  std::optional<std::size_t> accepted;
  std::vector<std::size_t> rejected;
  std::vector<ScalarReport> reports;  // as received by the PS
  std::vector<StepTrace> traces;      // per worker, when requested
  // |loss(w_g) - F_g| at acceptance; only meaningful when verification ran.
  double acceptance_gap = 0.0;
};

// One full protocol round: local steps, scoring, scalar reports, best-worker
// selection with upload verification and blacklisting, then broadcast.
RoundOutcome run_round(std::vector<WorkerState>& workers, PsState& ps, const RoundConfig& cfg);

// Scoring view for a worker under the configured score source.
SampleView score_view(const WorkerState& worker, const RoundConfig& cfg);

}  // namespace cbdsl
