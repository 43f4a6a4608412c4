#include "cbdsl/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "cbdsl/kernels.hpp"

namespace cbdsl {

namespace {

struct VariantName {
  VariantId id;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {VariantId::fedavg, "fedavg"},           {VariantId::fedavg_gtr, "fedavg_gtr"},
    {VariantId::cbdsl_plain, "cbdsl_plain"}, {VariantId::cbdsl_gsc, "cbdsl_gsc"},
    {VariantId::cbdsl_full, "cbdsl_full"},   {VariantId::pure_pso, "pure_pso"},
};

std::vector<std::size_t> population_of(const PartitionPlan& plan) {
  std::vector<std::size_t> pop;
  for (const auto& w : plan.workers) pop.insert(pop.end(), w.begin(), w.end());
  std::sort(pop.begin(), pop.end());
  return pop;
}

void fill_train_losses(RoundRecord& rec, const std::vector<WorkerState>& workers, const ExperimentSetup& s,
                       Exec exec) {
  std::vector<double> losses(workers.size());
  kernels::for_each_index(workers.size(), exec, [&](std::size_t i) {
    losses[i] = loss(s.spec, workers[i].w, view_of(s.train, workers[i].train_pool));
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  rec.train_loss_mean = sum / static_cast<double>(losses.size());
  rec.train_loss_min = *std::min_element(losses.begin(), losses.end());
  rec.train_loss_max = *std::max_element(losses.begin(), losses.end());
}

RoundRecord base_record(VariantId v, const ExperimentSetup& s, std::size_t round) {
  RoundRecord rec;
  rec.round = round;
  rec.variant = to_string(v);
  rec.seed = s.h.seed;
  return rec;
}

VariantResult run_fedavg(VariantId v, const ExperimentSetup& s, const VariantOptions& opt) {
  VariantResult res;
  auto workers = make_workers(s, v, opt.exec);
  ParameterVector w = s.w0;
  const TrainingContext ctx{&s.spec, &s.train, s.h.seed};
  const auto test_idx = all_indices(s.test);
  const SampleView test = view_of(s.test, test_idx);
  for (std::size_t t = 0; t < s.h.rounds; ++t) {
    const auto out = fedavg_round(workers, w, s.h, ctx, t, opt.exec);
    RoundRecord rec = base_record(v, s, t + 1);
    fill_train_losses(rec, workers, s, opt.exec);
    rec.f_g = std::numeric_limits<double>::quiet_NaN();
    rec.test_accuracy = accuracy(s.spec, w, test, opt.exec);
    rec.scalar_uplinks = out.ledger.scalars_up;
    rec.vector_uplinks = out.ledger.vectors_up;
    rec.vector_broadcasts = out.ledger.broadcasts;
    res.records.push_back(rec);
  }
  res.final_model = w;
  return res;
}

VariantResult run_cbdsl(VariantId v, const ExperimentSetup& s, const VariantOptions& opt) {
  VariantResult res;
  auto workers = make_workers(s, v, opt.exec);
  PsState ps;

  RoundConfig cfg;
  cfg.spec = &s.spec;
  cfg.data = &s.train;
  cfg.h = s.h;
  cfg.score_set = s.shared.score;
  cfg.score_source = v == VariantId::cbdsl_plain ? ScoreSource::local : ScoreSource::shared;
  cfg.verify = opt.verify && v != VariantId::cbdsl_plain;
  cfg.attack = opt.attack;
  cfg.exec = opt.exec;
  cfg.keep_traces = opt.diagnostics;

  std::optional<DiagnosticsCollector> diag;
  if (opt.diagnostics) {
    std::vector<LabelHistogram> hists;
    for (const auto& wk : workers) hists.push_back(label_histogram(view_of(s.train, wk.train_pool)));
    diag.emplace(s.spec, s.train, s.h, population_of(s.plan), s.w0, std::move(hists), opt.diag, opt.exec);
  }

  const auto test_idx = all_indices(s.test);
  const SampleView test = view_of(s.test, test_idx);
  for (std::size_t t = 0; t < s.h.rounds; ++t) {
    auto out = run_round(workers, ps, cfg);
    if (diag) diag->on_round(out.traces, workers);
    for (std::size_t id : out.rejected) res.invitations.push_back({t + 1, id, false});
    if (out.accepted) {
      res.invitations.push_back({t + 1, *out.accepted, true});
      res.max_acceptance_gap = std::max(res.max_acceptance_gap, out.acceptance_gap);
    }

    RoundRecord rec = base_record(v, s, t + 1);
    fill_train_losses(rec, workers, s, opt.exec);
    rec.f_g = ps.F_g;
    rec.test_accuracy = accuracy(s.spec, ps.w_g ? *ps.w_g : s.w0, test, opt.exec);
    rec.scalar_uplinks = out.ledger.scalars_up;
    rec.vector_uplinks = out.ledger.vectors_up;
    rec.vector_broadcasts = out.ledger.broadcasts;
    rec.detections = out.detections;
    res.records.push_back(rec);
  }
  res.blacklist = ps.blacklist;
  res.final_model = ps.w_g ? *ps.w_g : s.w0;
  if (diag) {
    res.diagnostics = diag->finish(workers, ps.w_g ? &*ps.w_g : nullptr);
    const auto& mrd = res.diagnostics->mean_relative_divergence;
    for (std::size_t r = 0; r < res.records.size() && r + 1 < mrd.size(); ++r)
      res.records[r].mean_model_divergence = mrd[r + 1];
  }
  return res;
}

VariantResult run_pso(const ExperimentSetup& s, const VariantOptions& opt) {
  VariantResult res;
  auto swarm = pso_init(s.h.num_workers, opt.pso.dim, opt.pso.init_range, sphere, s.h.seed);
  for (std::size_t t = 0; t < s.h.rounds; ++t) {
    pso_round(swarm, sphere, s.h, opt.pso.draws);
    RoundRecord rec = base_record(VariantId::pure_pso, s, t + 1);
    rec.f_g = swarm.F_g;
    double sum = 0.0, lo = kInfinity, hi = -kInfinity;
    for (const auto& p : swarm.particles) {
      const double f = sphere(p.w.span());
      sum += f;
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    rec.train_loss_mean = sum / static_cast<double>(swarm.particles.size());
    rec.train_loss_min = lo;
    rec.train_loss_max = hi;
    res.records.push_back(rec);
  }
  res.final_model = swarm.w_g;
  return res;
}

}  // namespace

VariantId parse_variant(const std::string& name) {
  for (const auto& [id, n] : kVariantNames)
    if (name == n) return id;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string to_string(VariantId v) {
  for (const auto& [id, n] : kVariantNames)
    if (id == v) return n;
  return "unknown";
}

bool uses_global_train(VariantId v) { return v == VariantId::fedavg_gtr || v == VariantId::cbdsl_full; }

bool is_cbdsl(VariantId v) {
  return v == VariantId::cbdsl_plain || v == VariantId::cbdsl_gsc || v == VariantId::cbdsl_full;
}

FedAvgOutcome fedavg_round(std::vector<WorkerState>& workers, ParameterVector& w, const HyperParameters& h,
                           const TrainingContext& ctx, std::size_t t, Exec exec) {
  if (workers.empty()) throw std::invalid_argument("fedavg_round: no workers");
  const std::size_t U = workers.size();
  std::vector<ParameterVector> grads(U);
  FedAvgOutcome out;
  out.batch_losses.resize(U);
  kernels::for_each_index(U, exec, [&](std::size_t i) {
    RngStream batch_rng = RngStream::derive(ctx.seed, Stream::batch, workers[i].id, t);
    const Batch batch = draw_batch(*ctx.data, workers[i].train_pool, h.batch_size, batch_rng);
    auto lg = loss_and_gradient(*ctx.spec, w, batch.view());
    grads[i] = std::move(lg.gradient);
    out.batch_losses[i] = lg.loss;
  });

  std::vector<double> sum(w.size(), 0.0);
  for (const auto& g : grads)
    for (std::size_t j = 0; j < w.size(); ++j) sum[j] += g[j];
  ParameterVector next(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) next[j] = w[j] - h.alpha * (sum[j] / static_cast<double>(U));
  if (!all_finite(next.span()))
    throw NumericError("non-finite consensus parameters at round " + std::to_string(t));

  for (auto& wk : workers) {
    wk.v = VelocityVector(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) wk.v[j] = next[j] - w[j];
    wk.w = next;
  }
  w = std::move(next);
  out.ledger.vectors_up = U;
  out.ledger.broadcasts = 1;
  return out;
}

double sphere(std::span<const double> w) { return dot(w, w); }

SwarmUpdate pso_particle_update(const ParameterVector& w, const VelocityVector& v, const ParameterVector& w_p,
                                const ParameterVector& w_g, double c0, double c1, double c2) {
  const std::size_t D = w.size();
  if (v.size() != D || w_p.size() != D || w_g.size() != D)
    throw std::invalid_argument("pso_particle_update: dimension mismatch");
  SwarmUpdate out{ParameterVector(D), VelocityVector(D)};
  for (std::size_t j = 0; j < D; ++j) {
    out.v[j] = c0 * v[j] + c1 * (w_p[j] - w[j]) + c2 * (w_g[j] - w[j]);
    out.w[j] = w[j] + out.v[j];
  }
  return out;
}

namespace {

void refresh_global_best(ParticleSwarm& swarm) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < swarm.particles.size(); ++k)
    if (swarm.particles[k].F_p < swarm.particles[best].F_p) best = k;
  if (swarm.particles[best].F_p < swarm.F_g) {
    swarm.F_g = swarm.particles[best].F_p;
    swarm.w_g = swarm.particles[best].w_p;
  }
}

}  // namespace

ParticleSwarm pso_init(std::size_t num_particles, std::size_t dim, double range, const Objective& f,
                       std::uint64_t seed) {
  if (num_particles == 0 || dim == 0) throw std::invalid_argument("pso_init: empty swarm");
  ParticleSwarm swarm;
  for (std::size_t k = 0; k < num_particles; ++k) {
    RngStream rng = RngStream::derive(seed, Stream::init, k);
    Particle p;
    p.w = ParameterVector(dim);
    for (std::size_t j = 0; j < dim; ++j) p.w[j] = rng.uniform(-range, range);
    p.v = VelocityVector(dim);
    p.w_p = p.w;
    p.F_p = f(p.w.span());
    swarm.particles.push_back(std::move(p));
  }
  refresh_global_best(swarm);
  return swarm;
}

PsoDraws parse_pso_draws(const std::string& name) {
  if (name == "scalar") return PsoDraws::scalar;
  if (name == "per_dimension") return PsoDraws::per_dimension;
  throw ConfigError("unknown pso draws '" + name + "'");
}

void pso_round(ParticleSwarm& swarm, const Objective& f, const HyperParameters& h, PsoDraws draws) {
  const std::size_t t = swarm.round;
  const double c0 = inertia_schedule(h, t);
  const ParameterVector w_g = *swarm.w_g;
  for (std::size_t k = 0; k < swarm.particles.size(); ++k) {
    Particle& p = swarm.particles[k];
    RngStream rng = RngStream::derive(h.seed, Stream::pso, k, t);
    if (draws == PsoDraws::scalar) {
      const Coefficients c = sample_coefficients(h, rng);
      auto next = pso_particle_update(p.w, p.v, p.w_p, w_g, c0, c.c1, c.c2);
      p.w = std::move(next.w);
      p.v = std::move(next.v);
    } else {
      for (std::size_t j = 0; j < p.w.size(); ++j) {
        const Coefficients c = sample_coefficients(h, rng);
        p.v[j] = c0 * p.v[j] + c.c1 * (p.w_p[j] - p.w[j]) + c.c2 * (w_g[j] - p.w[j]);
        p.w[j] += p.v[j];
      }
    }
    const double s = f(p.w.span());
    if (s < p.F_p) {
      p.F_p = s;
      p.w_p = p.w;
    }
  }
  refresh_global_best(swarm);
  ++swarm.round;
}

std::vector<WorkerState> make_workers(const ExperimentSetup& s, VariantId v, Exec exec) {
  std::vector<WorkerState> workers(s.plan.workers.size());
  kernels::for_each_index(workers.size(), exec, [&](std::size_t i) {
    WorkerState& wk = workers[i];
    wk.id = i;
    wk.w = s.w0;
    wk.v = VelocityVector(s.w0.size());
    wk.w_p = s.w0;
    wk.local = s.plan.workers[i];
    wk.train_pool = wk.local;
    if (uses_global_train(v))
      wk.train_pool.insert(wk.train_pool.end(), s.shared.train.begin(), s.shared.train.end());
    if (v == VariantId::cbdsl_plain)
      wk.F_p = loss(s.spec, s.w0, view_of(s.train, wk.local));
    else if (is_cbdsl(v))
      wk.F_p = loss(s.spec, s.w0, view_of(s.train, s.shared.score));
  });
  return workers;
}

void check_variant_requirements(const ExperimentSetup& s, VariantId v) {
  if ((v == VariantId::cbdsl_gsc || v == VariantId::cbdsl_full) && s.shared.score.empty())
    throw ConfigError(to_string(v) + ": missing 𝔇^G_sc (partition.global_score must be > 0)");
}

VariantResult run_variant(VariantId v, const ExperimentSetup& s, const VariantOptions& opt) {
  check_variant_requirements(s, v);
  VariantResult res;
  if (v == VariantId::pure_pso)
    res = run_pso(s, opt);
  else if (is_cbdsl(v))
    res = run_cbdsl(v, s, opt);
  else
    res = run_fedavg(v, s, opt);
  res.variant = v;
  res.partition_digest = s.plan.digest();
  res.init_digest = digest(s.w0.span());
  return res;
}

}  // namespace cbdsl
