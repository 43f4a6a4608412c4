#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cbdsl/experiment.hpp"

namespace cbdsl {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"data",
       {"source", "train_images", "train_labels", "test_images", "test_labels", "num_classes", "seed",
        "per_class", "dim", "separation", "test_per_class"}},
      {"partition",
       {"mode", "samples_per_worker", "num_shards", "shards_per_worker", "global_train", "global_score"}},
      {"model", {"kind", "hidden"}},
      {"hyper",
       {"c0", "delta_c1", "delta_c2", "alpha", "batch_size", "rounds", "num_workers", "verify_tolerance",
        "inertia_schedule", "verify"}},
      {"run", {"variants", "seeds", "output_dir", "parallel"}},
      {"attack", {"strategy", "attackers", "scale"}},
      {"diagnostics",
       {"enabled", "cosine", "divergence", "lipschitz_probes", "anchor_stride", "lipschitz_safety"}},
      {"pso", {"dim", "init_range", "draws"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void get(const std::string& sec, const std::string& key, std::string& out) const {
    if (auto v = raw(sec, key)) out = *v;
  }

  void get(const std::string& sec, const std::string& key, double& out) const {
    if (auto v = raw(sec, key)) out = number<double>(sec, key, *v);
  }

  void get(const std::string& sec, const std::string& key, std::size_t& out) const {
    if (auto v = raw(sec, key)) out = number<std::size_t>(sec, key, *v);
  }

  void get(const std::string& sec, const std::string& key, bool& out) const {
    if (auto v = raw(sec, key)) {
      if (*v == "true" || *v == "1" || *v == "yes")
        out = true;
      else if (*v == "false" || *v == "0" || *v == "no")
        out = false;
      else
        throw ConfigError(sec + "." + key + ": expected a boolean, got '" + *v + "'");
    }
  }

  template <typename T>
  static T number(const std::string& sec, const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty())
      throw ConfigError(sec + "." + key + ": invalid number '" + text + "'");
    return value;
  }

 private:
  const pt::ptree& tree_;
};

void reject_unknown(const pt::ptree& tree) {
  const auto& s = schema();
  for (const auto& [section, body] : tree) {
    auto it = s.find(section);
    if (it == s.end()) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside of any section");
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body)
      if (!it->second.contains(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  reject_unknown(tree);
  const Reader r(tree);
  ExperimentConfig cfg;

  if (auto v = r.raw("data", "source")) {
    if (*v == "synthetic")
      cfg.data.source = DataSource::synthetic;
    else if (*v == "idx")
      cfg.data.source = DataSource::idx;
    else
      throw ConfigError("data.source: expected synthetic or idx, got '" + *v + "'");
  }
  r.get("data", "train_images", cfg.data.train_images);
  r.get("data", "train_labels", cfg.data.train_labels);
  r.get("data", "test_images", cfg.data.test_images);
  r.get("data", "test_labels", cfg.data.test_labels);
  r.get("data", "num_classes", cfg.data.num_classes);
  if (auto v = r.raw("data", "seed")) cfg.data.seed = Reader::number<std::uint64_t>("data", "seed", *v);
  r.get("data", "per_class", cfg.data.per_class);
  r.get("data", "dim", cfg.data.dim);
  r.get("data", "separation", cfg.data.separation);
  r.get("data", "test_per_class", cfg.data.test_per_class);

  if (auto v = r.raw("partition", "mode")) {
    if (*v == "iid")
      cfg.partition.mode = PartitionMode::iid;
    else if (*v == "shard")
      cfg.partition.mode = PartitionMode::shard;
    else
      throw ConfigError("partition.mode: expected iid or shard, got '" + *v + "'");
  }
  r.get("partition", "samples_per_worker", cfg.partition.samples_per_worker);
  r.get("partition", "num_shards", cfg.partition.num_shards);
  r.get("partition", "shards_per_worker", cfg.partition.shards_per_worker);
  r.get("partition", "global_train", cfg.partition.global_train);
  r.get("partition", "global_score", cfg.partition.global_score);

  if (auto v = r.raw("model", "kind")) {
    if (*v == "softmax_regression")
      cfg.model.kind = ModelKind::softmax_regression;
    else if (*v == "mlp")
      cfg.model.kind = ModelKind::mlp;
    else
      throw ConfigError("model.kind: expected softmax_regression or mlp, got '" + *v + "'");
  }
  if (auto v = r.raw("model", "hidden"))
    for (const auto& item : split_list(*v))
      cfg.model.hidden_dims.push_back(Reader::number<std::size_t>("model", "hidden", item));
  if (cfg.model.kind == ModelKind::mlp && cfg.model.hidden_dims.empty()) cfg.model.hidden_dims = {32};

  r.get("hyper", "c0", cfg.h.c0);
  r.get("hyper", "delta_c1", cfg.h.delta_c1);
  r.get("hyper", "delta_c2", cfg.h.delta_c2);
  r.get("hyper", "alpha", cfg.h.alpha);
  r.get("hyper", "batch_size", cfg.h.batch_size);
  r.get("hyper", "rounds", cfg.h.rounds);
  r.get("hyper", "num_workers", cfg.h.num_workers);
  r.get("hyper", "verify_tolerance", cfg.h.verify_tolerance);
  if (auto v = r.raw("hyper", "inertia_schedule")) {
    if (*v == "constant")
      cfg.h.schedule = InertiaSchedule::constant;
    else if (*v == "linear")
      cfg.h.schedule = InertiaSchedule::linear;
    else
      throw ConfigError("hyper.inertia_schedule: expected constant or linear, got '" + *v + "'");
  }
  r.get("hyper", "verify", cfg.options.verify);

  if (auto v = r.raw("run", "variants")) {
    cfg.variants.clear();
    for (const auto& item : split_list(*v)) cfg.variants.push_back(parse_variant(item));
  }
  if (auto v = r.raw("run", "seeds")) {
    cfg.seeds.clear();
    for (const auto& item : split_list(*v)) cfg.seeds.push_back(Reader::number<std::uint64_t>("run", "seeds", item));
  }
  if (auto v = r.raw("run", "output_dir")) cfg.output_dir = *v;
  bool parallel = false;
  r.get("run", "parallel", parallel);
  cfg.options.exec = parallel ? Exec::parallel : Exec::serial;

  if (auto v = r.raw("attack", "strategy")) {
    try {
      cfg.options.attack.strategy = parse_attack_strategy(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("attack.strategy: ") + e.what());
    }
  }
  if (auto v = r.raw("attack", "attackers"))
    for (const auto& item : split_list(*v))
      cfg.options.attack.attackers.insert(Reader::number<std::size_t>("attack", "attackers", item));
  r.get("attack", "scale", cfg.options.attack.scale);

  r.get("diagnostics", "enabled", cfg.options.diagnostics);
  r.get("diagnostics", "cosine", cfg.options.diag.cosine);
  r.get("diagnostics", "divergence", cfg.options.diag.divergence);
  r.get("diagnostics", "lipschitz_probes", cfg.options.diag.lipschitz_probes);
  r.get("diagnostics", "anchor_stride", cfg.options.diag.anchor_stride);
  r.get("diagnostics", "lipschitz_safety", cfg.options.diag.lipschitz_safety);

  r.get("pso", "dim", cfg.options.pso.dim);
  r.get("pso", "init_range", cfg.options.pso.init_range);
  if (auto v = r.raw("pso", "draws")) cfg.options.pso.draws = parse_pso_draws(*v);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in);
}

void ExperimentConfig::validate() const {
  h.validate();
  if (variants.empty()) throw ConfigError("run.variants: at least one variant is required");
  if (seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
  if (data.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (data.source == DataSource::idx) {
    if (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() ||
        data.test_labels.empty())
      throw ConfigError("data: idx source needs train_images, train_labels, test_images, test_labels");
  } else {
    if (data.per_class == 0 || data.dim == 0 || data.test_per_class == 0)
      throw ConfigError("data: per_class, dim and test_per_class must be positive");
    if (!(data.separation > 0.0)) throw ConfigError("data.separation must be > 0");
  }
  if (partition.mode == PartitionMode::iid && partition.samples_per_worker == 0)
    throw ConfigError("partition.samples_per_worker must be positive");
  if (partition.mode == PartitionMode::shard) {
    if (partition.num_shards == 0 || partition.shards_per_worker == 0)
      throw ConfigError("partition: num_shards and shards_per_worker must be positive");
    if (h.num_workers * partition.shards_per_worker > partition.num_shards)
      throw ConfigError("partition: num_workers * shards_per_worker exceeds num_shards");
  }
  for (VariantId v : variants)
    if ((v == VariantId::cbdsl_gsc || v == VariantId::cbdsl_full) && partition.global_score == 0)
      throw ConfigError(to_string(v) + " requires a scoring set: missing 𝔇^G_sc (partition.global_score)");
  for (std::size_t id : options.attack.attackers)
    if (id >= h.num_workers) throw ConfigError("attack.attackers: worker id out of range");
  if (options.attack.strategy != AttackStrategy::none && options.attack.attackers.empty())
    throw ConfigError("attack.attackers: strategy set but no attacker ids");
  if (options.diag.lipschitz_probes < 2) throw ConfigError("diagnostics.lipschitz_probes must be >= 2");
  if (options.diag.anchor_stride == 0) throw ConfigError("diagnostics.anchor_stride must be positive");
  if (!(options.diag.lipschitz_safety >= 1.0)) throw ConfigError("diagnostics.lipschitz_safety must be >= 1");
  if (options.pso.dim == 0 || !(options.pso.init_range > 0.0))
    throw ConfigError("pso: dim and init_range must be positive");
  ModelSpec m = model;
  m.input_dim = data.source == DataSource::synthetic ? data.dim : 1;
  m.num_classes = data.num_classes;
  m.validate();
}

}  // namespace cbdsl
