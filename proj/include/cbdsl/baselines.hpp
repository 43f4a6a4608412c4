#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cbdsl/analysis.hpp"
#include "cbdsl/attacks.hpp"
#include "cbdsl/core.hpp"
#include "cbdsl/data.hpp"
#include "cbdsl/model.hpp"
#include "cbdsl/record.hpp"
#include "cbdsl/swarm.hpp"
#include "cbdsl/worker.hpp"

namespace cbdsl {

enum class VariantId { fedavg, fedavg_gtr, cbdsl_plain, cbdsl_gsc, cbdsl_full, pure_pso };

VariantId parse_variant(const std::string& name);
std::string to_string(VariantId v);
bool uses_global_train(VariantId v);
bool is_cbdsl(VariantId v);

// ---------------------------------------------------------------------------
// FedAvg: synchronized gradient averaging.

struct FedAvgOutcome {
  CommLedger ledger;
  std::vector<double> batch_losses;  // per worker
};

// Every worker takes a mini-batch gradient at the common model `w`; the PS
// applies w <- w - alpha * (sum of gradients) / U and all workers resync.
// Batches come from the same streams as worker_step.
FedAvgOutcome fedavg_round(std::vector<WorkerState>& workers, ParameterVector& w, const HyperParameters& h,
                           const TrainingContext& ctx, std::size_t t, Exec exec = Exec::serial);

// ---------------------------------------------------------------------------
// Canonical PSO on a shared objective.

using Objective = std::function<double(std::span<const double>)>;

double sphere(std::span<const double> w);

struct Particle {
  ParameterVector w;
  VelocityVector v;
  ParameterVector w_p;
  double F_p = kInfinity;
};

struct ParticleSwarm {
  std::vector<Particle> particles;
  std::optional<ParameterVector> w_g;
  double F_g = kInfinity;
  std::size_t round = 0;
};

// v' = c0 v + c1 (w_p - w) + c2 (w_g - w),  w' = w + v'.
SwarmUpdate pso_particle_update(const ParameterVector& w, const VelocityVector& v, const ParameterVector& w_p,
                                const ParameterVector& w_g, double c0, double c1, double c2);

// Uniform positions in [-range, range]^dim, zero velocities, bests evaluated.
ParticleSwarm pso_init(std::size_t num_particles, std::size_t dim, double range, const Objective& f,
                       std::uint64_t seed);

// Coefficient granularity: one (c1, c2) pair per particle, or one pair per
// coordinate.
enum class PsoDraws { scalar, per_dimension };

PsoDraws parse_pso_draws(const std::string& name);

// One synchronous iteration. Coefficients drawn per particle per round;
// personal bests on strict improvement; global best is the lowest personal
// best (ties to the lowest index) when it beats F_g.
void pso_round(ParticleSwarm& swarm, const Objective& f, const HyperParameters& h,
               PsoDraws draws = PsoDraws::per_dimension);

// ---------------------------------------------------------------------------
// Variant runner

struct ExperimentSetup {
  Dataset train;
  Dataset test;
  PartitionPlan plan;
  GlobalShared shared;
  ModelSpec spec;
  ParameterVector w0;
  HyperParameters h;  // h.seed is the run seed
};

struct PsoOptions {
  std::size_t dim = 10;
  double init_range = 1.0;
  PsoDraws draws = PsoDraws::per_dimension;
};

struct VariantOptions {
  AttackSpec attack;
  bool verify = true;
  Exec exec = Exec::serial;
  bool diagnostics = false;
  DiagnosticsOptions diag;
  PsoOptions pso;
};

struct InviteEvent {
  std::size_t round = 0;  // 1-based round of the invitation
  std::size_t worker = 0;
  bool accepted = false;
};

struct VariantResult {
  VariantId variant = VariantId::cbdsl_full;
  std::vector<RoundRecord> records;
  std::vector<InviteEvent> invitations;
  std::set<std::size_t> blacklist;
  double max_acceptance_gap = 0.0;
  std::uint64_t partition_digest = 0;
  std::uint64_t init_digest = 0;
  std::optional<ParameterVector> final_model;  // w_g, or the consensus model
  std::optional<DiagnosticsReport> diagnostics;
};

// Initial worker states for a variant: shared init, zero velocity, training
// pool D_i (plus D^G_tr when the variant uses it), F_p scored at w0 for
// CB-DSL variants.
std::vector<WorkerState> make_workers(const ExperimentSetup& s, VariantId v, Exec exec = Exec::serial);

// Throws ConfigError when the setup lacks data the variant needs.
void check_variant_requirements(const ExperimentSetup& s, VariantId v);

VariantResult run_variant(VariantId v, const ExperimentSetup& s, const VariantOptions& opt);

}  // namespace cbdsl
