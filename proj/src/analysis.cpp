#include "cbdsl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cbdsl {

OptimalVelocities reconstruct_optimal_velocities(const ParameterVector& w_prev,
                                                 const ParameterVector& w_p,
                                                 const ParameterVector& w_g, std::size_t round) {
  if (round == 0) throw std::invalid_argument("reconstruct_optimal_velocities: round 0 has no predecessor");
  const std::size_t D = w_prev.size();
  if (w_p.size() != D || w_g.size() != D)
    throw std::invalid_argument("reconstruct_optimal_velocities: dimension mismatch");
  OptimalVelocities out{VelocityVector(D), VelocityVector(D)};
  for (std::size_t j = 0; j < D; ++j) {
    out.v_p[j] = w_p[j] - w_prev[j];
    out.v_g[j] = w_g[j] - w_prev[j];
  }
  return out;
}

VelocityVector recompose_velocity(const VelocityVector& v, const OptimalVelocities& opt, double c0,
                                  double c1, double c2, double alpha, const ParameterVector& grad) {
  VelocityVector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j)
    out[j] = (c0 - c1 - c2) * v[j] + c1 * opt.v_p[j] + c2 * opt.v_g[j] - alpha * grad[j];
  return out;
}

std::optional<CosineSample> cosine_step(std::span<const double> v, std::span<const double> grad) {
  if (v.size() != grad.size()) throw std::invalid_argument("cosine_step: dimension mismatch");
  const double gn = norm(grad);
  if (gn == 0.0) return std::nullopt;
  const double vn = norm(v);
  CosineSample s;
  s.ratio = vn / gn;
  if (vn == 0.0) {
    s.zero_velocity = true;
    return s;
  }
  s.cosine = std::clamp(-dot(v, grad) / (vn * gn), -1.0, 1.0);
  return s;
}

double phi_e(const HyperParameters& h, const CosineStats& stats, double L) {
  const double c0 = h.c0, d1 = h.delta_c1, d2 = h.delta_c2, a = h.alpha;
  const double q_lo = stats.q.min_or_zero();
  const double u_lo = stats.u.min_or_zero();
  const double u_hi = stats.u.max_or_zero();
  const double qp_hi = stats.q_p.max_or_zero();
  const double up_hi = stats.u_p.max_or_zero();
  const double qg_hi = stats.q_g.max_or_zero();
  const double ug_hi = stats.u_g.max_or_zero();

  const double inertia_mix = c0 * c0 - d1 * c0 - d2 * c0 + d1 * d1 / 3.0 + d2 * d2 / 3.0 + d1 * d2 / 2.0;
  const double quadratic = inertia_mix * u_hi * u_hi + d1 * d1 / 3.0 * up_hi * up_hi +
                           d2 * d2 / 3.0 * ug_hi * ug_hi + a * a;
  return a - (2.0 * c0 - d1 - d2) / 2.0 * q_lo * u_lo - d1 / 2.0 * up_hi * qp_hi -
         d2 / 2.0 * ug_hi * qg_hi - 2.0 * L * quadratic;
}

ConvergenceBound convergence_bound(double F0, double Fstar, std::size_t T, double phi) {
  if (T == 0) throw std::invalid_argument("convergence_bound: T must be >= 1");
  ConvergenceBound b;
  if (phi <= 0.0) {
    b.vacuous = true;
    b.bound = std::numeric_limits<double>::infinity();
    return b;
  }
  b.bound = (F0 - Fstar) / (static_cast<double>(T) * phi);
  return b;
}

GenieUpdate genie_update(const ParameterVector& w, const VelocityVector& v, double c0, double alpha,
                         const ParameterVector& grad) {
  const std::size_t D = w.size();
  if (v.size() != D || grad.size() != D) throw std::invalid_argument("genie_update: dimension mismatch");
  GenieUpdate out{ParameterVector(D), VelocityVector(D)};
  for (std::size_t j = 0; j < D; ++j) {
    out.v[j] = c0 * v[j] - alpha * grad[j];
    out.w[j] = w[j] + out.v[j];
  }
  return out;
}

double genie_step(GenieState& g, const HyperParameters& h, const ModelSpec& spec, const Dataset& data,
                  std::size_t t, Exec exec) {
  if (g.population.empty()) throw std::invalid_argument("genie_step: no population attached");
  auto lg = loss_and_gradient(spec, g.w, {&data, g.population}, exec);
  auto next = genie_update(g.w, g.v, inertia_schedule(h, t), h.alpha, lg.gradient);
  g.w = std::move(next.w);
  g.v = std::move(next.v);
  return lg.loss;
}

double lipschitz_from_pairs(const GradientFn& grad, std::span<const ParameterPair> pairs) {
  double best = 0.0;
  for (const auto& [a, b] : pairs) {
    const double dw = distance(a.span(), b.span());
    if (dw == 0.0) continue;
    const auto ga = grad(a.span());
    const auto gb = grad(b.span());
    best = std::max(best, distance(ga, gb) / dw);
  }
  return best;
}

double f_max(const ModelSpec& spec, const ParameterVector& w, const SampleView& population, Exec exec) {
  double m = 0.0;
  for (const auto& g : class_gradients(spec, w, population, exec))
    if (g.size()) m = std::max(m, norm(g.span()));
  return m;
}

LipschitzEstimate estimate_lipschitz(const ModelSpec& spec, const SampleView& population,
                                     std::span<const ParameterPair> anchors, std::size_t probe_count,
                                     RngStream& rng, double safety, Exec exec) {
  if (probe_count < 2) throw std::invalid_argument("estimate_lipschitz: need at least 2 probes");
  if (anchors.empty()) throw std::invalid_argument("estimate_lipschitz: no anchor pairs");
  const std::size_t C = spec.num_classes;
  const LabelHistogram pop = label_histogram(population);

  LipschitzEstimate est;
  est.safety = safety;
  est.L_c.assign(C, 0.0);
  double raw_L = 0.0;
  for (std::size_t k = 0; k < probe_count; ++k) {
    const auto& [a, b] = anchors[rng.index(anchors.size())];
    double lam1 = rng.uniform(), lam2 = rng.uniform();
    if (k % 2 == 0) {
      lam1 = 0.0;
      lam2 = 1.0;
    }
    ParameterVector x(a.size()), y(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      x[j] = a[j] + lam1 * (b[j] - a[j]);
      y[j] = a[j] + lam2 * (b[j] - a[j]);
    }
    const double dw = distance(x.span(), y.span());
    if (dw == 0.0) continue;
    ++est.probes;

    const auto gx = class_gradients(spec, x, population, exec);
    const auto gy = class_gradients(spec, y, population, exec);
    std::vector<double> full_x(a.size(), 0.0), full_y(a.size(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      if (!gx[c].size()) continue;
      est.L_c[c] = std::max(est.L_c[c], distance(gx[c].span(), gy[c].span()) / dw);
      for (std::size_t j = 0; j < a.size(); ++j) {
        full_x[j] += pop.probs[c] * gx[c][j];
        full_y[j] += pop.probs[c] * gy[c][j];
      }
    }
    raw_L = std::max(raw_L, distance(full_x, full_y) / dw);
  }
  est.L = raw_L * safety;
  for (double& l : est.L_c) l *= safety;
  return est;
}

bool DivergenceReport::all_hold() const {
  return std::all_of(rounds.begin(), rounds.end(), [](const RoundVerdict& v) { return v.holds; });
}

std::size_t DivergenceReport::holds_count() const {
  return static_cast<std::size_t>(
      std::count_if(rounds.begin(), rounds.end(), [](const RoundVerdict& v) { return v.holds; }));
}

DivergenceReport divergence_bound_check(const DivergenceTrace& trace, const LabelHistogram& hist_i,
                                        const LabelHistogram& hist_pop, const LipschitzEstimate& lip,
                                        const HyperParameters& h) {
  if (lip.L_c.empty() || lip.L_c.size() != hist_i.probs.size())
    throw std::invalid_argument("divergence_bound_check: missing L_c estimate");
  DivergenceReport rep;
  rep.emd = emd(hist_i, hist_pop);
  double weighted = 0.0;
  for (std::size_t c = 0; c < hist_i.probs.size(); ++c) weighted += hist_i.probs[c] * lip.L_c[c];
  rep.beta = 1.0 + h.alpha * weighted;

  if (trace.rounds.empty()) return rep;
  double telescoped = trace.rounds[0].distance;
  for (std::size_t t = 0; t + 1 < trace.rounds.size(); ++t) {
    const auto& r = trace.rounds[t];
    const double drive = std::abs(r.c0 - r.c1 - r.c2) * r.velocity_distance + h.alpha * r.fmax * rep.emd;
    RoundVerdict v;
    v.round = t;
    v.lhs = trace.rounds[t + 1].distance;
    v.rhs = rep.beta * r.distance + drive;
    v.slack = v.rhs - v.lhs;
    v.holds = v.lhs <= v.rhs;
    telescoped = rep.beta * telescoped + drive;
    v.telescoped_rhs = telescoped;
    rep.rounds.push_back(v);
  }
  return rep;
}

DiagnosticsCollector::DiagnosticsCollector(const ModelSpec& spec, const Dataset& data,
                                           const HyperParameters& h, std::vector<std::size_t> population,
                                           const ParameterVector& w0, std::vector<LabelHistogram> worker_hists,
                                           DiagnosticsOptions opt, Exec exec)
    : spec_(spec), data_(data), h_(h), opt_(opt), exec_(exec), hists_(std::move(worker_hists)) {
  genie_.w = w0;
  genie_.v = VelocityVector(w0.size());
  genie_.population = std::move(population);
  const SampleView pop{&data_, genie_.population};
  pop_hist_ = label_histogram(pop);
  F0_ = loss(spec_, w0, pop, exec_);
  Fstar_ = F0_;
  const std::size_t U = hists_.size();
  traces_.resize(U);
  for (std::size_t i = 0; i < U; ++i) traces_[i].worker = i;
  prev_w_.resize(U);
  grad_sq_sum_.assign(U, 0.0);
  grad_sq_min_.assign(U, std::numeric_limits<double>::infinity());
}

void DiagnosticsCollector::on_round(std::span<const StepTrace> traces, std::span<const WorkerState> workers) {
  const std::size_t t = rounds_seen_;
  const SampleView pop{&data_, genie_.population};
  auto& stats = report_.summary.stats;

  double fmax_t = 0.0;
  const double genie_norm = norm(genie_.w.span());
  if (opt_.divergence) fmax_t = f_max(spec_, genie_.w, pop, exec_);

  double rel_sum = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const StepTrace& tr = traces[i];
    const WorkerState& wk = workers[i];
    DiagnosticRow row;
    row.round = t;
    row.worker = wk.id;
    row.c0 = tr.c0;
    row.c1 = tr.c1;
    row.c2 = tr.c2;

    double vres = 0.0;
    for (std::size_t j = 0; j < wk.w.size(); ++j)
      vres = std::max(vres, std::abs(wk.v[j] - (wk.w[j] - tr.w_before[j])));
    row.velocity_residual = vres;
    report_.summary.max_velocity_residual = std::max(report_.summary.max_velocity_residual, vres);

    row.grad_sq = dot(tr.gradient.span(), tr.gradient.span());
    grad_sq_sum_[i] += row.grad_sq;
    grad_sq_min_[i] = std::min(grad_sq_min_[i], row.grad_sq);

    if (opt_.cosine) {
      if (auto s = cosine_step(tr.v_before.span(), tr.gradient.span())) {
        row.ratio_v = s->ratio;
        if (s->zero_velocity) {
          ++stats.zero_velocity;
        } else {
          row.cos_v = s->cosine;
          stats.q.add(s->cosine);
          stats.u.add(s->ratio);
        }
      } else {
        ++stats.skipped_zero_grad;
      }
    }

    if (t >= 1) {
      const auto opt = reconstruct_optimal_velocities(prev_w_[i], tr.w_p, tr.w_g, t);
      const auto v_next = recompose_velocity(tr.v_before, opt, tr.c0, tr.c1, tr.c2, h_.alpha, tr.gradient);
      double res = 0.0;
      for (std::size_t j = 0; j < v_next.size(); ++j) res = std::max(res, std::abs(v_next[j] - wk.v[j]));
      row.reconstruction_residual = res;
      report_.summary.max_reconstruction_residual = std::max(report_.summary.max_reconstruction_residual, res);

      if (opt_.cosine) {
        if (auto s = cosine_step(opt.v_p.span(), tr.gradient.span()); s && !s->zero_velocity) {
          row.cos_p = s->cosine;
          row.ratio_p = s->ratio;
          stats.q_p.add(s->cosine);
          stats.u_p.add(s->ratio);
        }
        if (auto s = cosine_step(opt.v_g.span(), tr.gradient.span()); s && !s->zero_velocity) {
          row.cos_g = s->cosine;
          row.ratio_g = s->ratio;
          stats.q_g.add(s->cosine);
          stats.u_g.add(s->ratio);
        }
      }
    }

    if (opt_.divergence) {
      RoundDivergence rd;
      rd.distance = distance(tr.w_before.span(), genie_.w.span());
      rd.relative = genie_norm > 0.0 ? rd.distance / genie_norm : std::numeric_limits<double>::infinity();
      rd.velocity_distance = distance(tr.v_before.span(), genie_.v.span());
      rd.c0 = tr.c0;
      rd.c1 = tr.c1;
      rd.c2 = tr.c2;
      rd.fmax = fmax_t;
      traces_[i].rounds.push_back(rd);
      row.divergence = rd.distance;
      row.relative_divergence = rd.relative;
      row.velocity_divergence = rd.velocity_distance;
      rel_sum += rd.relative;
      if (t % opt_.anchor_stride == 0) anchors_.emplace_back(tr.w_before, genie_.w);
    }
    prev_w_[i] = tr.w_before;
    report_.rows.push_back(row);
  }

  if (opt_.divergence) {
    report_.mean_relative_divergence.push_back(rel_sum / static_cast<double>(traces.size()));
    Fstar_ = std::min(Fstar_, genie_step(genie_, h_, spec_, data_, t, exec_));
  }
  ++rounds_seen_;
}

double DiagnosticsCollector::latest_mean_relative_divergence() const {
  if (report_.mean_relative_divergence.empty()) return std::numeric_limits<double>::quiet_NaN();
  return report_.mean_relative_divergence.back();
}

DiagnosticsReport DiagnosticsCollector::finish(std::span<const WorkerState> workers,
                                               const ParameterVector* ps_best) {
  const SampleView pop{&data_, genie_.population};
  auto& sum = report_.summary;
  const std::size_t U = workers.size();

  if (opt_.divergence) {
    const double genie_norm = norm(genie_.w.span());
    double rel_sum = 0.0;
    for (std::size_t i = 0; i < U; ++i) {
      RoundDivergence rd;
      rd.distance = distance(workers[i].w.span(), genie_.w.span());
      rd.relative = genie_norm > 0.0 ? rd.distance / genie_norm : std::numeric_limits<double>::infinity();
      rd.velocity_distance = distance(workers[i].v.span(), genie_.v.span());
      traces_[i].rounds.push_back(rd);
      rel_sum += rd.relative;
    }
    report_.mean_relative_divergence.push_back(rel_sum / static_cast<double>(U));
    Fstar_ = std::min(Fstar_, loss(spec_, genie_.w, pop, exec_));
  }
  if (ps_best) Fstar_ = std::min(Fstar_, loss(spec_, *ps_best, pop, exec_));

  LipschitzEstimate lip;
  if (opt_.divergence && !anchors_.empty()) {
    RngStream rng = RngStream::derive(h_.seed, Stream::lipschitz);
    lip = estimate_lipschitz(spec_, pop, anchors_, opt_.lipschitz_probes, rng, opt_.lipschitz_safety, exec_);
    for (std::size_t i = 0; i < U; ++i) {
      auto rep = divergence_bound_check(traces_[i], hists_[i], pop_hist_, lip, h_);
      for (const auto& v : rep.rounds) {
        auto& row = report_.rows[v.round * U + i];
        row.bound_rhs = v.rhs;
        row.bound_slack = v.slack;
        row.bound_holds = v.holds ? 1 : 0;
      }
      sum.bound_rounds += rep.rounds.size();
      sum.bound_holds += rep.holds_count();
      report_.divergence.push_back(std::move(rep));
    }
  }

  sum.L = lip.L;
  sum.L_c_max = lip.L_c.empty() ? 0.0 : *std::max_element(lip.L_c.begin(), lip.L_c.end());
  sum.F0 = F0_;
  sum.Fstar = Fstar_;
  sum.phi_e = phi_e(h_, sum.stats, sum.L);
  sum.phi_e_fedavg = h_.alpha - 2.0 * sum.L * h_.alpha * h_.alpha;
  sum.bound = convergence_bound(F0_, Fstar_, std::max<std::size_t>(rounds_seen_, 1), sum.phi_e);
  if (rounds_seen_ > 0 && U > 0) {
    double acc = 0.0, mn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < U; ++i) {
      acc += grad_sq_sum_[i] / static_cast<double>(rounds_seen_);
      mn = std::min(mn, grad_sq_min_[i]);
    }
    sum.mean_grad_sq = acc / static_cast<double>(U);
    sum.min_grad_sq = mn;
  }
  return std::move(report_);
}

}  // namespace cbdsl
