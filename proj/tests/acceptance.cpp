// Acceptance report: one PASS/FAIL line per criterion.
// Usage: acceptance <configs-dir>

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cbdsl/baselines.hpp"
#include "cbdsl/experiment.hpp"

using namespace cbdsl;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kFdRelTol = 1e-5;
constexpr double kFdFloor = 1e-3;
constexpr double kFdStep = 1e-6;
constexpr std::size_t kFdCoords = 20;
constexpr double kOrderingGtrMargin = 0.01;
constexpr double kOrderingPlainMargin = 0.05;
constexpr double kByzantineWithin = 0.02;
constexpr double kAblationLoss = 0.20;
constexpr double kResidualTol = 1e-10;
constexpr std::size_t kDivergenceRounds = 50;
constexpr std::size_t kDivergenceWorkers = 3;
constexpr std::size_t kGapFirstRound = 150;
constexpr std::size_t kGapLastRound = 200;

struct Verdict {
  std::string name;
  bool pass = false;
  bool expected_fail = false;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(const std::string& name, bool pass, const std::string& detail, bool expected_fail = false) {
  verdicts.push_back({name, pass, expected_fail && !pass, detail});
  std::printf("%s %s: %s\n", pass ? "PASS" : (expected_fail ? "FAIL [expected]" : "FAIL"), name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << x;
  return ss.str();
}

ExperimentConfig load(const fs::path& p) { return load_config(p); }

struct Runs {
  // variant -> per-seed results, in seed order
  std::map<VariantId, std::vector<VariantResult>> by_variant;
};

Runs run_all(const ExperimentConfig& cfg, const VariantOptions& opt) {
  Runs runs;
  for (auto seed : cfg.seeds) {
    const auto setup = build_setup(cfg, seed);
    for (auto v : cfg.variants) runs.by_variant[v].push_back(run_variant(v, setup, opt));
  }
  return runs;
}

double final_accuracy(const VariantResult& r) { return r.records.back().test_accuracy; }

double mean_final_accuracy(const std::vector<VariantResult>& rs) {
  double s = 0.0;
  for (const auto& r : rs) s += final_accuracy(r);
  return s / static_cast<double>(rs.size());
}

std::string per_seed(const std::vector<VariantResult>& rs) {
  std::string out;
  for (const auto& r : rs) out += (out.empty() ? "" : "/") + fmt(final_accuracy(r));
  return out;
}

// ---------------------------------------------------------------------------

void degenerate_equivalence(const ExperimentConfig& cfg) {
  ExperimentSetup s = build_setup(cfg, cfg.seeds.front());
  s.h.c0 = s.h.delta_c1 = s.h.delta_c2 = 0.0;
  auto workers = make_workers(s, VariantId::cbdsl_full);
  std::vector<ParameterVector> sgd(workers.size(), s.w0);
  PsState ps;
  RoundConfig rc;
  rc.spec = &s.spec;
  rc.data = &s.train;
  rc.h = s.h;
  rc.score_set = s.shared.score;
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < s.h.rounds; ++t) {
    run_round(workers, ps, rc);
    for (std::size_t i = 0; i < workers.size(); ++i) {
      auto rng = RngStream::derive(s.h.seed, Stream::batch, workers[i].id, t);
      const Batch batch = draw_batch(s.train, workers[i].train_pool, s.h.batch_size, rng);
      const auto g = gradient(s.spec, sgd[i], batch.view());
      for (std::size_t j = 0; j < g.size(); ++j) sgd[i][j] -= s.h.alpha * g[j];
      mismatches += !(workers[i].w == sgd[i]);
    }
  }
  report("degenerate_equivalence", mismatches == 0,
         std::to_string(s.h.rounds) + " rounds x " + std::to_string(workers.size()) + " workers, " +
             std::to_string(mismatches) + " worker-rounds differ bitwise from standalone SGD");
}

void gradient_check(const ExperimentConfig& cfg) {
  const ExperimentSetup s = build_setup(cfg, cfg.seeds.front());
  std::vector<std::size_t> idx(50);
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k * (s.train.size() / idx.size());
  const SampleView sv = view_of(s.train, idx);
  double worst = 0.0;
  std::size_t checks = 0;
  for (ModelKind kind : {ModelKind::softmax_regression, ModelKind::mlp}) {
    const ModelSpec spec{kind, s.train.dim, kind == ModelKind::mlp ? std::vector<std::size_t>{32}
                                                                    : std::vector<std::size_t>{},
                         s.train.num_classes};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto init = RngStream::derive(seed, Stream::init);
      auto w = init_parameters(spec, init, 0.5);
      const auto g = gradient(spec, w, sv);
      auto pick = RngStream::derive(seed, Stream::test_split, 1);
      for (std::size_t k = 0; k < kFdCoords; ++k) {
        const std::size_t j = pick.index(w.size());
        const double orig = w[j];
        w[j] = orig + kFdStep;
        const double up = loss(spec, w, sv);
        w[j] = orig - kFdStep;
        const double down = loss(spec, w, sv);
        w[j] = orig;
        const double fd = (up - down) / (2 * kFdStep);
        worst = std::max(worst, std::abs(fd - g[j]) / std::max({std::abs(fd), std::abs(g[j]), kFdFloor}));
        ++checks;
      }
    }
  }
  report("gradient_finite_difference", worst <= kFdRelTol,
         std::to_string(checks) + " coordinates, max relative error " + fmt(worst, 3) + " (tol " +
             fmt(kFdRelTol) + ")");
}

void emd_arithmetic() {
  Dataset ds;
  ds.dim = 1;
  ds.num_classes = 10;
  for (int c = 0; c < 10; ++c)
    for (int k = 0; k < 6000; ++k) ds.push_back(std::vector<double>{static_cast<double>(k)}, c);
  const auto plan = partition_shards(ds, 200, 2, 50, 1);
  const auto shared = build_global_shared(ds, 600, 0, plan, 1);
  const auto all = all_indices(ds);
  const auto pop = label_histogram(view_of(ds, all));
  bool found = false;
  double local = 0.0, mixed = 0.0;
  for (const auto& w : plan.workers) {
    const auto h = label_histogram(view_of(ds, w));
    if (std::count(h.counts.begin(), h.counts.end(), 0u) != 8) continue;
    auto pool = w;
    pool.insert(pool.end(), shared.train.begin(), shared.train.end());
    local = emd(h, pop);
    mixed = emd(label_histogram(view_of(ds, pool)), pop);
    found = true;
    break;
  }
  report("emd_arithmetic", found && local == 1.6 && mixed == 0.8,
         "two-class worker EMD " + fmt(local, 17) + ", after mixing 600+600 " + fmt(mixed, 17));
}

void non_iid_ordering(const Runs& clean) {
  const double full = mean_final_accuracy(clean.by_variant.at(VariantId::cbdsl_full));
  const double gtr = mean_final_accuracy(clean.by_variant.at(VariantId::fedavg_gtr));
  const double plain = mean_final_accuracy(clean.by_variant.at(VariantId::cbdsl_plain));
  report("non_iid_ordering", full > gtr - kOrderingGtrMargin && full >= plain + kOrderingPlainMargin,
         "mean final accuracy cbdsl_full " + fmt(full) + ", fedavg_gtr " + fmt(gtr) + ", cbdsl_plain " +
             fmt(plain) + "; fedavg " + fmt(mean_final_accuracy(clean.by_variant.at(VariantId::fedavg))) +
             ", cbdsl_gsc " + fmt(mean_final_accuracy(clean.by_variant.at(VariantId::cbdsl_gsc))));
}

void byzantine(const Runs& clean, const Runs& attacked, const Runs& ablation, std::size_t attacker) {
  const auto& c = clean.by_variant.at(VariantId::cbdsl_full);
  const auto& a = attacked.by_variant.at(VariantId::cbdsl_full);
  const auto& l = ablation.by_variant.at(VariantId::cbdsl_full);
  const double mc = mean_final_accuracy(c), ma = mean_final_accuracy(a), ml = mean_final_accuracy(l);
  bool blacklisted_at_first = true;
  for (const auto& r : a) {
    const auto first = std::find_if(r.invitations.begin(), r.invitations.end(),
                                    [&](const InviteEvent& e) { return e.worker == attacker; });
    const bool ever_accepted = std::any_of(r.invitations.begin(), r.invitations.end(), [&](const InviteEvent& e) {
      return e.worker == attacker && e.accepted;
    });
    blacklisted_at_first = blacklisted_at_first && first != r.invitations.end() && !first->accepted &&
                           !ever_accepted && r.blacklist.count(attacker) == 1;
  }
  const bool within = std::abs(ma - mc) <= kByzantineWithin;
  const bool ablation_loses = mc - ml >= kAblationLoss;
  report("byzantine_robustness", within && blacklisted_at_first && ablation_loses,
         "mean accuracy clean " + fmt(mc) + " (" + per_seed(c) + "), attacked " + fmt(ma) + " (" + per_seed(a) +
             "), no-verification " + fmt(ml) + " (" + per_seed(l) + "); attacker rejected at first invitation: " +
             (blacklisted_at_first ? "yes" : "no"));
}

void communication(const Runs& clean, std::size_t U, std::size_t T) {
  bool ok = true;
  std::string detail;
  const auto& fed = clean.by_variant.at(VariantId::fedavg);
  for (VariantId v : {VariantId::cbdsl_gsc, VariantId::cbdsl_full}) {
    const auto& cb = clean.by_variant.at(v);
    for (std::size_t k = 0; k < cb.size(); ++k) {
      const auto f = summarize(fed[k], 0), c = summarize(cb[k], 0);
      ok = ok && f.total_vector_uplinks == T * U && c.total_vector_uplinks * U <= f.total_vector_uplinks;
      detail += (detail.empty() ? "" : ", ") + to_string(v) + " " + std::to_string(c.total_vector_uplinks) + "/" +
                std::to_string(f.total_vector_uplinks);
    }
  }
  report("communication_ratio", ok, "vector uplinks cbdsl/fedavg per seed: " + detail + " (bound 1/" +
                                        std::to_string(U) + ", fedavg must equal " + std::to_string(T * U) + ")");
}

void residuals(const std::vector<const Runs*>& all) {
  double vel = 0.0, reconstruction = 0.0;
  std::size_t runs = 0;
  for (const Runs* r : all)
    for (const auto& [v, rs] : r->by_variant)
      for (const auto& res : rs)
        if (res.diagnostics) {
          vel = std::max(vel, res.diagnostics->summary.max_velocity_residual);
          reconstruction = std::max(reconstruction, res.diagnostics->summary.max_reconstruction_residual);
          ++runs;
        }
  report("velocity_identities", runs > 0 && vel <= kResidualTol && reconstruction <= kResidualTol,
         std::to_string(runs) + " runs, max velocity residual " + fmt(vel, 3) + ", max reconstruction residual " +
             fmt(reconstruction, 3) + " (tol " + fmt(kResidualTol) + ")");
}

void divergence_inequality(const ExperimentConfig& cfg) {
  ExperimentSetup s = build_setup(cfg, cfg.seeds.front());
  s.h.rounds = kDivergenceRounds;
  VariantOptions opt = cfg.options;
  opt.diagnostics = true;
  opt.diag.divergence = true;
  const auto r = run_variant(VariantId::cbdsl_full, s, opt);
  std::size_t holds = 0, total = 0;
  std::string per_worker;
  for (std::size_t i = 0; i < kDivergenceWorkers; ++i) {
    const auto& d = r.diagnostics->divergence.at(i);
    holds += d.holds_count();
    total += d.rounds.size();
    per_worker += (per_worker.empty() ? "" : ", ") + std::string("worker ") + std::to_string(i) + " " +
                  std::to_string(d.holds_count()) + "/" + std::to_string(d.rounds.size());
  }
  report("divergence_one_step_bound", holds == total && total > 0,
         std::to_string(holds) + "/" + std::to_string(total) + " rounds hold (" + per_worker + ")", true);
}

void divergence_gap(const Runs& clean) {
  auto window_mean = [](const std::vector<VariantResult>& rs) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rs) {
      const auto& m = r.diagnostics->mean_relative_divergence;
      for (std::size_t t = kGapFirstRound; t <= kGapLastRound && t < m.size(); ++t, ++n) s += m[t];
    }
    return n ? s / static_cast<double>(n) : std::nan("");
  };
  const double full = window_mean(clean.by_variant.at(VariantId::cbdsl_full));
  const double plain = window_mean(clean.by_variant.at(VariantId::cbdsl_plain));
  report("divergence_gap", full < plain,
         "mean relative divergence over rounds " + std::to_string(kGapFirstRound) + "-" +
             std::to_string(kGapLastRound) + ": cbdsl_full " + fmt(full) + ", cbdsl_plain " + fmt(plain));
}

void monotone_and_sound(const std::vector<std::pair<const Runs*, bool>>& all, double eps) {
  bool monotone = true, sound = true;
  double worst_gap = 0.0;
  std::size_t runs = 0;
  for (const auto& [r, verified] : all)
    for (const auto& [v, rs] : r->by_variant) {
      if (!is_cbdsl(v)) continue;
      for (const auto& res : rs) {
        ++runs;
        double prev = kInfinity;
        for (const auto& rec : res.records) {
          monotone = monotone && rec.f_g <= prev;
          prev = rec.f_g;
        }
        if (verified && v != VariantId::cbdsl_plain) {
          worst_gap = std::max(worst_gap, res.max_acceptance_gap);
          sound = sound && res.max_acceptance_gap <= eps;
        }
      }
    }
  report("global_best_monotone_and_verified", monotone && sound,
         std::to_string(runs) + " runs, F_g non-increasing: " + (monotone ? "yes" : "no") +
             ", max |loss(w_g) - F_g| at acceptance " + fmt(worst_gap, 3) + " (eps " + fmt(eps) + ")");
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[fs::relative(e.path(), dir).string()] = ss.str();
    }
  return out;
}

void determinism(const std::vector<ExperimentConfig>& cfgs) {
  bool same = true;
  std::size_t files = 0;
  const auto root = fs::temp_directory_path() / "cbdsl_acceptance";
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    auto a = cfgs[k], b = cfgs[k];
    a.output_dir = root / ("cfg" + std::to_string(k)) / "serial";
    b.output_dir = root / ("cfg" + std::to_string(k)) / "parallel";
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
    a.options.exec = Exec::serial;
    b.options.exec = Exec::parallel;
    run_experiment(a);
    omp_set_num_threads(4);
    run_experiment(b);
    const auto ta = read_tree(a.output_dir), tb = read_tree(b.output_dir);
    same = same && ta == tb;
    files += ta.size();
  }
  report("determinism", same && files > 0,
         std::to_string(files) + " CSV files compared byte for byte across a serial and a 4-thread rerun");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto shard = load(dir / "desk_shard.ini");
    const auto attack = load(dir / "desk_attack.ini");

    degenerate_equivalence(shard);
    gradient_check(shard);
    emd_arithmetic();

    const Runs clean = run_all(shard, shard.options);
    const Runs attacked = run_all(attack, attack.options);
    VariantOptions no_verify = attack.options;
    no_verify.verify = false;
    const Runs ablation = run_all(attack, no_verify);

    non_iid_ordering(clean);
    byzantine(clean, attacked, ablation, *attack.options.attack.attackers.begin());
    communication(clean, shard.h.num_workers, shard.h.rounds);
    residuals({&clean, &attacked, &ablation});
    divergence_inequality(shard);
    divergence_gap(clean);
    monotone_and_sound({{&clean, true}, {&attacked, true}, {&ablation, false}}, shard.h.verify_tolerance);
    determinism({shard, attack});
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::size_t pass = 0, expected = 0, unexpected = 0;
  for (const auto& v : verdicts) {
    pass += v.pass;
    expected += v.expected_fail;
    unexpected += !v.pass && !v.expected_fail;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("summary: %zu/%zu pass, %zu expected failures, %zu unexpected failures (%.0f s)\n", pass,
              verdicts.size(), expected, unexpected, secs);
  return unexpected == 0 ? 0 : 1;
}
