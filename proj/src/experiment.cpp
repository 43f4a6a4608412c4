#include "cbdsl/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace cbdsl {

namespace {

std::string hex64(std::uint64_t x) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + 16, x, 16);
  std::string s(buf, ptr);
  return std::string(16 - s.size(), '0') + s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, int base = 10) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

ExperimentSetup build_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentSetup s;
  const auto& d = cfg.data;
  if (d.source == DataSource::idx) {
    s.train = load_idx(d.train_images, d.train_labels, d.num_classes);
    s.test = load_idx(d.test_images, d.test_labels, d.num_classes);
  } else {
    s.train = synthetic_blobs(d.num_classes, d.per_class, d.dim, d.separation, d.seed, 0);
    s.test = synthetic_blobs(d.num_classes, d.test_per_class, d.dim, d.separation, d.seed, 1);
  }
  s.spec = cfg.model;
  s.spec.input_dim = s.train.dim;
  s.spec.num_classes = d.num_classes;
  s.spec.validate();

  const auto& p = cfg.partition;
  const std::size_t U = cfg.h.num_workers;
  try {
    s.plan = p.mode == PartitionMode::iid ? partition_iid(s.train, U, p.samples_per_worker, seed)
                                          : partition_shards(s.train, p.num_shards, p.shards_per_worker, U, seed);
    s.shared = build_global_shared(s.train, p.global_train, p.global_score, s.plan, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  RngStream init_rng = RngStream::derive(seed, Stream::init);
  s.w0 = init_parameters(s.spec, init_rng);
  s.h = cfg.h;
  s.h.seed = seed;
  return s;
}

SummaryRow summarize(const VariantResult& r, std::uint64_t seed) {
  SummaryRow row;
  row.variant = to_string(r.variant);
  row.seed = seed;
  row.rounds = r.records.size();
  if (!r.records.empty()) {
    row.final_accuracy = r.records.back().test_accuracy;
    row.final_f_g = r.records.back().f_g;
  }
  for (const auto& rec : r.records) {
    row.total_scalar_uplinks += rec.scalar_uplinks;
    row.total_vector_uplinks += rec.vector_uplinks;
    row.total_broadcasts += rec.vector_broadcasts;
    row.total_detections += rec.detections;
  }
  row.partition_digest = r.partition_digest;
  row.init_digest = r.init_digest;
  return row;
}

void write_round_csv(std::ostream& out, const std::vector<RoundRecord>& records) {
  out << "round,variant,seed,f_g,train_loss_mean,train_loss_min,train_loss_max,test_accuracy,"
         "scalar_uplinks,vector_uplinks,vector_broadcasts,detections,mean_model_divergence\n";
  for (const auto& r : records) {
    out << r.round << ',' << r.variant << ',' << r.seed << ',' << format_double(r.f_g) << ','
        << format_double(r.train_loss_mean) << ',' << format_double(r.train_loss_min) << ','
        << format_double(r.train_loss_max) << ',' << format_double(r.test_accuracy) << ',' << r.scalar_uplinks
        << ',' << r.vector_uplinks << ',' << r.vector_broadcasts << ',' << r.detections << ','
        << format_double(r.mean_model_divergence) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "variant,seed,final_accuracy,final_f_g,total_scalar_uplinks,total_vector_uplinks,total_broadcasts,"
         "total_detections,rounds,partition_digest,init_digest\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.seed << ',' << format_double(r.final_accuracy) << ','
        << format_double(r.final_f_g) << ',' << r.total_scalar_uplinks << ',' << r.total_vector_uplinks << ','
        << r.total_broadcasts << ',' << r.total_detections << ',' << r.rounds << ','
        << hex64(r.partition_digest) << ',' << hex64(r.init_digest) << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("summary.csv: empty file");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
  for (const char* name : {"variant", "seed", "total_vector_uplinks"})
    if (!col.contains(name)) throw std::runtime_error(std::string("summary.csv: missing column ") + name);

  auto field = [&](const std::vector<std::string>& cells, const std::string& name) -> std::string {
    auto it = col.find(name);
    if (it == col.end() || it->second >= cells.size()) return "";
    return cells[it->second];
  };
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    SummaryRow r;
    r.variant = field(cells, "variant");
    r.seed = parse_u64(field(cells, "seed"));
    r.total_vector_uplinks = parse_u64(field(cells, "total_vector_uplinks"));
    if (auto s = field(cells, "final_accuracy"); !s.empty()) r.final_accuracy = parse_double(s);
    if (auto s = field(cells, "final_f_g"); !s.empty()) r.final_f_g = parse_double(s);
    if (auto s = field(cells, "total_scalar_uplinks"); !s.empty()) r.total_scalar_uplinks = parse_u64(s);
    if (auto s = field(cells, "total_broadcasts"); !s.empty()) r.total_broadcasts = parse_u64(s);
    if (auto s = field(cells, "total_detections"); !s.empty()) r.total_detections = parse_u64(s);
    if (auto s = field(cells, "rounds"); !s.empty()) r.rounds = parse_u64(s);
    if (auto s = field(cells, "partition_digest"); !s.empty()) r.partition_digest = parse_u64(s, 16);
    if (auto s = field(cells, "init_digest"); !s.empty()) r.init_digest = parse_u64(s, 16);
    rows.push_back(r);
  }
  return rows;
}

void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report) {
  out << "round,worker,cos_v,cos_p,cos_g,ratio_v,ratio_p,ratio_g,grad_sq,velocity_residual,reconstruction_residual,"
         "divergence,relative_divergence,velocity_divergence,c0,c1,c2,bound_rhs,bound_slack,bound_holds\n";
  for (const auto& r : report.rows) {
    out << r.round << ',' << r.worker;
    for (double x : {r.cos_v, r.cos_p, r.cos_g, r.ratio_v, r.ratio_p, r.ratio_g, r.grad_sq, r.velocity_residual,
                     r.reconstruction_residual, r.divergence, r.relative_divergence, r.velocity_divergence, r.c0, r.c1,
                     r.c2, r.bound_rhs, r.bound_slack})
      out << ',' << format_double(x);
    out << ',' << r.bound_holds << '\n';
  }
}

void write_diagnostics_summary(std::ostream& out, const DiagnosticsReport& report, const HyperParameters& h) {
  const auto& s = report.summary;
  const auto& st = s.stats;
  auto kv = [&](const std::string& k, const std::string& v) { out << k << ',' << v << '\n'; };
  auto num = [&](const std::string& k, double v) { kv(k, format_double(v)); };
  out << "key,value\n";
  num("alpha", h.alpha);
  num("c0", h.c0);
  num("delta_c1", h.delta_c1);
  num("delta_c2", h.delta_c2);
  num("L", s.L);
  num("L_c_max", s.L_c_max);
  num("phi_e", s.phi_e);
  num("phi_e_fedavg", s.phi_e_fedavg);
  num("phi_e_minus_fedavg", s.phi_e - s.phi_e_fedavg);
  kv("phi_e_minus_fedavg_sign", s.phi_e > s.phi_e_fedavg ? "+" : (s.phi_e < s.phi_e_fedavg ? "-" : "0"));
  num("F0", s.F0);
  num("Fstar", s.Fstar);
  kv("Fstar_source", "approximation:min_population_loss_observed_in_run");
  num("bound", s.bound.bound);
  kv("bound_vacuous", s.bound.vacuous ? "true" : "false");
  num("mean_grad_sq", s.mean_grad_sq);
  num("min_grad_sq", s.min_grad_sq);
  kv("extrema_scope", "a_posteriori_over_logged_run");
  const std::pair<const char*, const Extrema*> ex[] = {{"q", &st.q},     {"q_p", &st.q_p}, {"q_g", &st.q_g},
                                                      {"u", &st.u},     {"u_p", &st.u_p}, {"u_g", &st.u_g}};
  for (const auto& [name, e] : ex) {
    num(std::string(name) + "_min", e->min_or_zero());
    num(std::string(name) + "_max", e->max_or_zero());
    kv(std::string(name) + "_count", std::to_string(e->count));
  }
  kv("skipped_zero_grad", std::to_string(st.skipped_zero_grad));
  kv("zero_velocity", std::to_string(st.zero_velocity));
  kv("bound_rounds", std::to_string(s.bound_rounds));
  kv("bound_holds", std::to_string(s.bound_holds));
  num("max_velocity_residual", s.max_velocity_residual);
  num("max_reconstruction_residual", s.max_reconstruction_residual);
}

std::vector<SummaryRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto runs_dir = cfg.output_dir / "runs";
  std::filesystem::create_directories(runs_dir);
  std::vector<SummaryRow> summary;
  for (VariantId v : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      const std::string stem = to_string(v) + "_" + std::to_string(seed);
      VariantResult res;
      ExperimentSetup setup;
      try {
        setup = build_setup(cfg, seed);
        res = run_variant(v, setup, cfg.options);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw std::runtime_error("variant " + to_string(v) + ", seed " + std::to_string(seed) + ": " + e.what());
      }
      std::ostringstream rounds;
      write_round_csv(rounds, res.records);
      write_file(runs_dir / (stem + ".csv"), rounds.str());
      if (res.diagnostics) {
        std::ostringstream diag, diag_summary;
        write_diagnostics_csv(diag, *res.diagnostics);
        write_diagnostics_summary(diag_summary, *res.diagnostics, setup.h);
        write_file(runs_dir / (stem + "_diag.csv"), diag.str());
        write_file(runs_dir / (stem + "_diag_summary.csv"), diag_summary.str());
      }
      summary.push_back(summarize(res, seed));
    }
  }
  std::ostringstream out;
  write_summary_csv(out, summary);
  write_file(cfg.output_dir / "summary.csv", out.str());
  return summary;
}

std::vector<CommunicationRow> report_communication(const std::vector<SummaryRow>& summary, std::ostream& warn) {
  std::map<std::uint64_t, const SummaryRow*> fedavg;
  for (const auto& r : summary)
    if (r.variant == "fedavg") fedavg[r.seed] = &r;
  std::vector<CommunicationRow> rows;
  for (const auto& r : summary) {
    if (r.variant.rfind("cbdsl", 0) != 0) continue;
    auto it = fedavg.find(r.seed);
    if (it == fedavg.end()) {
      warn << "warning: no fedavg run for seed " << r.seed << "; skipping " << r.variant << '\n';
      continue;
    }
    CommunicationRow c;
    c.seed = r.seed;
    c.variant = r.variant;
    c.vector_uplinks = r.total_vector_uplinks;
    c.fedavg_vector_uplinks = it->second->total_vector_uplinks;
    c.ratio = c.fedavg_vector_uplinks ? static_cast<double>(c.vector_uplinks) / c.fedavg_vector_uplinks
                                      : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(c);
  }
  return rows;
}

void write_communication_csv(std::ostream& out, const std::vector<CommunicationRow>& rows) {
  out << "seed,variant,vector_uplinks,fedavg_vector_uplinks,ratio\n";
  for (const auto& r : rows)
    out << r.seed << ',' << r.variant << ',' << r.vector_uplinks << ',' << r.fedavg_vector_uplinks << ','
        << format_double(r.ratio) << '\n';
}

}  // namespace cbdsl
