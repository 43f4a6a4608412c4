#include "cbdsl/swarm.hpp"

#include <cmath>
#include <string>

#include "cbdsl/kernels.hpp"

namespace cbdsl {

SwarmUpdate swarm_update(const ParameterVector& w, const VelocityVector& v, const ParameterVector& w_p,
                         const ParameterVector& w_g, double c0, double c1, double c2, double alpha,
                         const ParameterVector& grad) {
  const std::size_t D = w.size();
  if (v.size() != D || w_p.size() != D || w_g.size() != D || grad.size() != D)
    throw std::invalid_argument("swarm_update: dimension mismatch");
  SwarmUpdate out{ParameterVector(D), VelocityVector(D)};
  for (std::size_t j = 0; j < D; ++j) {
    const double swarm = c0 * v[j] + c1 * (w_p[j] - w[j]) + c2 * (w_g[j] - w[j]);
    out.w[j] = (w[j] + swarm) - alpha * grad[j];
    out.v[j] = out.w[j] - w[j];
  }
  return out;
}

void worker_step(WorkerState& state, const ParameterVector* global_best, const HyperParameters& h,
                 const TrainingContext& ctx, std::size_t t, StepTrace* trace) {
  RngStream coeff_rng = RngStream::derive(ctx.seed, Stream::coefficients, state.id, t);
  RngStream batch_rng = RngStream::derive(ctx.seed, Stream::batch, state.id, t);
  const Coefficients c = sample_coefficients(h, coeff_rng);
  const double c0 = inertia_schedule(h, t);

  const Batch batch = draw_batch(*ctx.data, state.train_pool, h.batch_size, batch_rng);
  auto lg = loss_and_gradient(*ctx.spec, state.w, batch.view());
  const ParameterVector& w_g = global_best ? *global_best : state.w;

  auto next = swarm_update(state.w, state.v, state.w_p, w_g, c0, c.c1, c.c2, h.alpha, lg.gradient);
  if (!all_finite(next.w.span()))
    throw NumericError("non-finite parameters at worker " + std::to_string(state.id) + ", round " +
                       std::to_string(t));

  if (trace) {
    trace->worker = state.id;
    trace->round = t;
    trace->c0 = c0;
    trace->c1 = c.c1;
    trace->c2 = c.c2;
    trace->batch_loss = lg.loss;
    trace->w_before = state.w;
    trace->v_before = state.v;
    trace->w_p = state.w_p;
    trace->w_g = w_g;
    trace->gradient = std::move(lg.gradient);
  }
  state.w = std::move(next.w);
  state.v = std::move(next.v);
}

ScalarReport score_and_update_best(WorkerState& state, const SampleView& score_set,
                                   const ModelSpec& spec, Exec exec) {
  if (score_set.size() == 0) throw std::invalid_argument("score_and_update_best: empty scoring set");
  const double s = loss(spec, state.w, score_set, exec);
  if (s < state.F_p) {
    state.F_p = s;
    state.w_p = state.w;
  }
  return {state.id, state.F_p};
}

std::optional<std::size_t> select_global_best(std::span<const ScalarReport> reports, const PsState& ps) {
  const ScalarReport* best = nullptr;
  for (const auto& r : reports) {
    if (ps.blacklist.contains(r.worker)) continue;
    if (!best || r.claimed < best->claimed || (r.claimed == best->claimed && r.worker < best->worker))
      best = &r;
  }
  if (!best || !(best->claimed < ps.F_g)) return std::nullopt;
  return best->worker;
}

Verdict verify_upload(const ParameterVector& upload, double claimed, const SampleView& score_set,
                      const ModelSpec& spec, double tolerance, Exec exec) {
  if (upload.size() != spec.parameter_count() || !all_finite(upload.span())) return Verdict::byzantine;
  const double s = loss(spec, upload, score_set, exec);
  return std::abs(s - claimed) <= tolerance ? Verdict::accepted : Verdict::byzantine;
}

SampleView score_view(const WorkerState& worker, const RoundConfig& cfg) {
  if (cfg.score_source == ScoreSource::local) return {cfg.data, worker.local};
  return {cfg.data, cfg.score_set};
}

RoundOutcome run_round(std::vector<WorkerState>& workers, PsState& ps, const RoundConfig& cfg) {
  const std::size_t t = ps.round;
  const TrainingContext ctx{cfg.spec, cfg.data, cfg.h.seed};
  const ParameterVector* global_best = ps.w_g ? &*ps.w_g : nullptr;

  RoundOutcome out;
  if (cfg.keep_traces) out.traces.resize(workers.size());
  std::vector<ScalarReport> honest(workers.size());

  kernels::for_each_index(workers.size(), cfg.exec, [&](std::size_t i) {
    auto& wk = workers[i];
    worker_step(wk, global_best, cfg.h, ctx, t, cfg.keep_traces ? &out.traces[i] : nullptr);
    honest[i] = score_and_update_best(wk, score_view(wk, cfg), *cfg.spec);
  });

  // Scalar uplink. Forgers undercut the best score they know of.
  for (std::size_t i = 0; i < workers.size(); ++i) {
    if (ps.blacklist.contains(workers[i].id)) continue;
    ScalarReport r = honest[i];
    if (cfg.attack.is_attacker(workers[i].id)) r = forge_report(r, ps.F_g, cfg.attack.strategy);
    out.reports.push_back(r);
  }
  out.ledger.scalars_up = out.reports.size();

  auto claim_of = [&](std::size_t id) {
    for (const auto& r : out.reports)
      if (r.worker == id) return r.claimed;
    return kInfinity;
  };

  while (auto invited = select_global_best(out.reports, ps)) {
    const std::size_t id = *invited;
    WorkerState* wk = nullptr;
    for (auto& w : workers)
      if (w.id == id) wk = &w;
    const double claim = claim_of(id);

    ParameterVector upload = wk->w_p;
    if (cfg.attack.is_attacker(id)) {
      RngStream rng = RngStream::derive(cfg.h.seed, Stream::attack, id, t);
      upload = forge_upload(*wk, cfg.attack.strategy, cfg.attack.scale, rng);
    }
    ++out.ledger.vectors_up;

    if (cfg.verify) {
      const SampleView sv = score_view(*wk, cfg);
      if (verify_upload(upload, claim, sv, *cfg.spec, cfg.h.verify_tolerance, cfg.exec) ==
          Verdict::byzantine) {
        ps.blacklist.insert(id);
        out.rejected.push_back(id);
        ++out.detections;
        continue;
      }
      out.acceptance_gap = std::abs(loss(*cfg.spec, upload, sv, cfg.exec) - claim);
    }
    ps.w_g = std::move(upload);
    ps.F_g = claim;
    out.accepted = id;
    out.ledger.broadcasts = 1;
    break;
  }
  ++ps.round;
  return out;
}

}  // namespace cbdsl
