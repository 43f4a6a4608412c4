#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cbdsl/core.hpp"
#include "cbdsl/data.hpp"
#include "cbdsl/model.hpp"
#include "cbdsl/swarm.hpp"

namespace cbdsl {

// ---------------------------------------------------------------------------
// Velocity decomposition

struct OptimalVelocities {
  VelocityVector v_p;  // w_p - w_{t-1}
  VelocityVector v_g;  // w_g - w_{t-1}
};

// Personal- and global-best velocities relative to the previous iterate.
// Throws std::invalid_argument at round 0, which has no predecessor.
OptimalVelocities reconstruct_optimal_velocities(const ParameterVector& w_prev,
                                                 const ParameterVector& w_p,
                                                 const ParameterVector& w_g, std::size_t round);

// (c0 - c1 - c2) v + c1 v_p + c2 v_g - alpha * grad
VelocityVector recompose_velocity(const VelocityVector& v, const OptimalVelocities& opt, double c0,
                                  double c1, double c2, double alpha, const ParameterVector& grad);

// ---------------------------------------------------------------------------
// Cosine / ratio statistics

struct CosineSample {
  double cosine = 0.0;  // <v, -grad> / (|v| |grad|); 0 when |v| = 0
  double ratio = 0.0;   // |v| / |grad|
  bool zero_velocity = false;
};

// std::nullopt when |grad| = 0 (the sample is skipped).
std::optional<CosineSample> cosine_step(std::span<const double> v, std::span<const double> grad);

struct Extrema {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;

  void add(double x) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    ++count;
  }
  double min_or_zero() const { return count ? lo : 0.0; }
  double max_or_zero() const { return count ? hi : 0.0; }
};

// Running extrema of the three cosines and three norm ratios.
struct CosineStats {
  Extrema q, q_p, q_g;  // cosines of v, v_p, v_g against -grad
  Extrema u, u_p, u_g;  // |v|, |v_p|, |v_g| over |grad|
  std::size_t skipped_zero_grad = 0;
  std::size_t zero_velocity = 0;
};

// Composite coefficient of the expected-convergence bound, evaluated with the
// empirical extrema. Empty extrema count as zero. May be negative.
double phi_e(const HyperParameters& h, const CosineStats& stats, double L);

struct ConvergenceBound {
  double bound = 0.0;  // (F0 - F*) / (T * phi_e); +inf when vacuous
  bool vacuous = false;
};

ConvergenceBound convergence_bound(double F0, double Fstar, std::size_t T, double phi);

// ---------------------------------------------------------------------------
// Genie worker: heavy-ball descent on the full population.

struct GenieState {
  ParameterVector w;
  VelocityVector v;
  std::vector<std::size_t> population;
};

struct GenieUpdate {
  ParameterVector w;
  VelocityVector v;
};

// v' = c0 v - alpha * grad,  w' = w + v'.
GenieUpdate genie_update(const ParameterVector& w, const VelocityVector& v, double c0, double alpha,
                         const ParameterVector& grad);

// Returns the population loss at the pre-step parameters.
double genie_step(GenieState& g, const HyperParameters& h, const ModelSpec& spec, const Dataset& data,
                  std::size_t t, Exec exec = Exec::serial);

// ---------------------------------------------------------------------------
// Lipschitz estimation

struct LipschitzEstimate {
  double L = 0.0;               // full-population gradient, inflated
  std::vector<double> L_c;      // class-conditional gradients, inflated
  std::size_t probes = 0;       // non-degenerate pairs used
  double safety = 1.0;
};

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;
using ParameterPair = std::pair<ParameterVector, ParameterVector>;

// max over pairs of |grad(a) - grad(b)| / |a - b|; pairs with a == b are
// skipped. Returns 0 when every pair is degenerate.
double lipschitz_from_pairs(const GradientFn& grad, std::span<const ParameterPair> pairs);

// Probes the population loss around trajectory anchor pairs. Even probes use
// the endpoints of a random anchor pair, odd probes a random sub-segment.
// Each probe consumes a fixed number of draws, so the estimate is
// non-decreasing in probe_count. Raw maxima are multiplied by `safety`.
LipschitzEstimate estimate_lipschitz(const ModelSpec& spec, const SampleView& population,
                                     std::span<const ParameterPair> anchors, std::size_t probe_count,
                                     RngStream& rng, double safety = 1.5, Exec exec = Exec::serial);

// max over classes of the class-conditional mean-gradient norm.
double f_max(const ModelSpec& spec, const ParameterVector& w, const SampleView& population,
             Exec exec = Exec::serial);

// ---------------------------------------------------------------------------
// Model divergence against the genie

struct RoundDivergence {
  double distance = 0.0;           // |w_i,t - w^g_t|
  double relative = 0.0;           // distance / |w^g_t|
  double velocity_distance = 0.0;  // |v_i,t - v^g_t|
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;  // realized in the step t -> t+1
  double fmax = 0.0;               // f_max(w^g_t)
};

// rounds[t] for t = 0..T; the last entry carries no step.
struct DivergenceTrace {
  std::size_t worker = 0;
  std::vector<RoundDivergence> rounds;
};

struct RoundVerdict {
  std::size_t round = 0;  // the step t -> t+1
  double lhs = 0.0;       // |w_i,t+1 - w^g_t+1|
  double rhs = 0.0;       // one-step bound
  double slack = 0.0;     // rhs - lhs
  bool holds = false;
  double telescoped_rhs = 0.0;  // closed form summed from round 0
};

struct DivergenceReport {
  double beta = 0.0;
  double emd = 0.0;
  std::vector<RoundVerdict> rounds;

  bool all_hold() const;
  std::size_t holds_count() const;
};

// One-step check |w_i,t+1 - w^g_t+1| <= beta |w_i,t - w^g_t|
//   + |c0 - c1 - c2| |v_i,t - v^g_t| + alpha f_max(w^g_t) EMD(p_i, p)
// with beta = 1 + alpha sum_c p_i(c) L_c, using realized coefficients.
// The telescoped value uses the same per-round factors.
DivergenceReport divergence_bound_check(const DivergenceTrace& trace, const LabelHistogram& hist_i,
                                        const LabelHistogram& hist_pop, const LipschitzEstimate& lip,
                                        const HyperParameters& h);

// ---------------------------------------------------------------------------
// Online collector fed by the protocol loop.

struct DiagnosticsOptions {
  bool cosine = true;
  bool divergence = true;
  std::size_t lipschitz_probes = 200;
  std::size_t anchor_stride = 1;  // record a trajectory anchor pair every k rounds
  double lipschitz_safety = 1.5;
};

struct DiagnosticRow {
  std::size_t round = 0;
  std::size_t worker = 0;
  double cos_v = std::numeric_limits<double>::quiet_NaN();
  double cos_p = std::numeric_limits<double>::quiet_NaN();
  double cos_g = std::numeric_limits<double>::quiet_NaN();
  double ratio_v = std::numeric_limits<double>::quiet_NaN();
  double ratio_p = std::numeric_limits<double>::quiet_NaN();
  double ratio_g = std::numeric_limits<double>::quiet_NaN();
  double grad_sq = 0.0;
  double velocity_residual = 0.0;  // max |v' - (w' - w)|
  double reconstruction_residual = std::numeric_limits<double>::quiet_NaN();  // NaN at round 0
  double divergence = std::numeric_limits<double>::quiet_NaN();
  double relative_divergence = std::numeric_limits<double>::quiet_NaN();
  double velocity_divergence = std::numeric_limits<double>::quiet_NaN();
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double bound_rhs = std::numeric_limits<double>::quiet_NaN();
  double bound_slack = std::numeric_limits<double>::quiet_NaN();
  int bound_holds = -1;  // -1 not evaluated
};

struct DiagnosticsSummary {
  double phi_e = 0.0;
  double phi_e_fedavg = 0.0;  // alpha - 2 L alpha^2
  double L = 0.0;
  double L_c_max = 0.0;
  double F0 = 0.0;
  double Fstar = 0.0;  // approximation: minimum population loss observed in this run
  ConvergenceBound bound;
  double mean_grad_sq = 0.0;  // mean over workers of (1/T) sum_t |grad|^2
  double min_grad_sq = 0.0;
  CosineStats stats;
  std::size_t bound_rounds = 0;
  std::size_t bound_holds = 0;
  double max_velocity_residual = 0.0;
  double max_reconstruction_residual = 0.0;
};

struct DiagnosticsReport {
  std::vector<DiagnosticRow> rows;  // ordered by (round, worker)
  std::vector<DivergenceReport> divergence;  // per worker, when enabled
  std::vector<double> mean_relative_divergence;  // per round over workers
  DiagnosticsSummary summary;
};

class DiagnosticsCollector {
 public:
  DiagnosticsCollector(const ModelSpec& spec, const Dataset& data, const HyperParameters& h,
                       std::vector<std::size_t> population, const ParameterVector& w0,
                       std::vector<LabelHistogram> worker_hists, DiagnosticsOptions opt,
                       Exec exec = Exec::serial);

  // Call after each run_round with its traces and the post-step worker states.
  void on_round(std::span<const StepTrace> traces, std::span<const WorkerState> workers);

  // Closes the trajectories and evaluates the bounds.
  DiagnosticsReport finish(std::span<const WorkerState> workers, const ParameterVector* ps_best);

  // Mean relative divergence recorded for the latest round, NaN if disabled.
  double latest_mean_relative_divergence() const;

 private:
  const ModelSpec& spec_;
  const Dataset& data_;
  HyperParameters h_;
  DiagnosticsOptions opt_;
  Exec exec_;
  GenieState genie_;
  std::vector<LabelHistogram> hists_;
  LabelHistogram pop_hist_;
  double F0_ = 0.0;
  double Fstar_ = std::numeric_limits<double>::infinity();

  DiagnosticsReport report_;
  std::vector<DivergenceTrace> traces_;
  std::vector<ParameterVector> prev_w_;  // w_{i,t-1}
  std::vector<double> grad_sq_sum_;
  std::vector<double> grad_sq_min_;
  std::vector<ParameterPair> anchors_;
  std::size_t rounds_seen_ = 0;
};

}  // namespace cbdsl
