#include "cbdsl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include "cbdsl/core.hpp"
#include "cbdsl/rng.hpp"

namespace cbdsl {

void Dataset::push_back(std::span<const double> x, int label) {
  if (x.size() != dim) throw std::invalid_argument("Dataset::push_back: feature dimension mismatch");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

void Dataset::validate() const {
  if (features.size() != labels.size() * dim)
    throw std::invalid_argument("Dataset: feature storage does not match sample count");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw std::invalid_argument("Dataset: label out of range");
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> buf, std::size_t offset) {
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open IDX file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
void fisher_yates(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes) {
  if (images.size() < 16) throw std::runtime_error("IDX images: truncated header");
  if (labels.size() < 8) throw std::runtime_error("IDX labels: truncated header");
  if (read_be32(images, 0) != 0x00000803) throw std::runtime_error("IDX images: bad magic");
  if (read_be32(labels, 0) != 0x00000801) throw std::runtime_error("IDX labels: bad magic");

  const std::size_t n_images = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  if (n_images != n_labels)
    throw std::runtime_error("IDX: count mismatch (" + std::to_string(n_images) + " images, " +
                             std::to_string(n_labels) + " labels)");
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n_images * pixels) throw std::runtime_error("IDX images: truncated payload");
  if (labels.size() < 8 + n_labels) throw std::runtime_error("IDX labels: truncated payload");

  Dataset ds;
  ds.dim = pixels;
  ds.num_classes = num_classes;
  ds.features.resize(n_images * pixels);
  ds.labels.resize(n_images);
  for (std::size_t i = 0; i < n_images * pixels; ++i)
    ds.features[i] = static_cast<double>(images[16 + i]) / 255.0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    const std::uint8_t y = labels[8 + i];
    if (y >= num_classes) throw std::runtime_error("IDX labels: label " + std::to_string(y) + " out of range");
    ds.labels[i] = y;
  }
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes) {
  const auto images = slurp(images_path);
  const auto labels = slurp(labels_path);
  try {
    return parse_idx(images, labels, num_classes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " [" + images_path + ", " + labels_path + "]");
  }
}

Dataset synthetic_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                        double separation, std::uint64_t seed, std::uint64_t split) {
  if (num_classes == 0 || per_class == 0 || dim == 0)
    throw std::invalid_argument("synthetic_blobs: counts must be positive");

  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  RngStream mean_rng = RngStream::derive(seed, Stream::synthetic, 0, 0);
  if (dim >= num_classes) {
    // Scaled basis vectors: every pair sits exactly `separation` apart. The
    // axis assignment is shuffled so classes do not always own the first axes.
    std::vector<std::size_t> axes(dim);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    fisher_yates(axes, mean_rng);
    const double scale = separation / std::sqrt(2.0) * (1.0 + 1e-12);
    for (std::size_t c = 0; c < num_classes; ++c) means[c][axes[c]] = scale;
  } else {
    double half_width = separation;
    std::size_t attempts = 0;
    for (std::size_t c = 0; c < num_classes;) {
      for (double& m : means[c]) m = mean_rng.uniform(-half_width, half_width);
      bool ok = true;
      for (std::size_t j = 0; j < c && ok; ++j) ok = distance(means[c], means[j]) >= separation;
      if (ok) {
        ++c;
        attempts = 0;
      } else if (++attempts > 1000) {
        half_width *= 1.5;
        attempts = 0;
      }
    }
  }

  Dataset ds;
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.features.reserve(num_classes * per_class * dim);
  RngStream noise = RngStream::derive(seed, Stream::synthetic, 1, split);
  std::vector<double> x(dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      for (std::size_t d = 0; d < dim; ++d) x[d] = means[c][d] + noise.normal();
      ds.push_back(x, static_cast<int>(c));
    }
  }
  return ds;
}

std::uint64_t PartitionPlan::digest() const {
  std::vector<std::size_t> flat;
  for (const auto& w : workers) {
    flat.push_back(w.size());
    flat.insert(flat.end(), w.begin(), w.end());
  }
  return cbdsl::digest(std::span<const std::size_t>(flat));
}

PartitionPlan partition_iid(const Dataset& ds, std::size_t num_workers, std::size_t per_worker,
                            std::uint64_t seed) {
  if (num_workers == 0 || per_worker == 0)
    throw std::invalid_argument("partition_iid: worker count and per-worker size must be positive");
  if (num_workers * per_worker > ds.size())
    throw std::invalid_argument("partition_iid: insufficient samples (" + std::to_string(ds.size()) +
                                " < " + std::to_string(num_workers * per_worker) + ")");
  auto perm = all_indices(ds);
  RngStream rng = RngStream::derive(seed, Stream::partition);
  fisher_yates(perm, rng);

  PartitionPlan plan;
  plan.mode = PartitionMode::iid;
  plan.workers.resize(num_workers);
  for (std::size_t u = 0; u < num_workers; ++u) {
    auto first = perm.begin() + static_cast<std::ptrdiff_t>(u * per_worker);
    plan.workers[u].assign(first, first + static_cast<std::ptrdiff_t>(per_worker));
    std::sort(plan.workers[u].begin(), plan.workers[u].end());
  }
  return plan;
}

PartitionPlan partition_shards(const Dataset& ds, std::size_t num_shards,
                               std::size_t shards_per_worker, std::size_t num_workers,
                               std::uint64_t seed) {
  if (num_shards == 0 || shards_per_worker == 0 || num_workers == 0)
    throw std::invalid_argument("partition_shards: counts must be positive");
  const std::size_t shard_size = ds.size() / num_shards;
  if (shard_size == 0)
    throw std::invalid_argument("partition_shards: more shards than samples");
  if (num_workers * shards_per_worker > num_shards)
    throw std::invalid_argument("partition_shards: " + std::to_string(num_workers) + " workers x " +
                                std::to_string(shards_per_worker) + " shards exceeds " +
                                std::to_string(num_shards) + " shards");

  auto sorted = all_indices(ds);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });

  std::vector<std::size_t> shard_ids(num_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
  RngStream rng = RngStream::derive(seed, Stream::partition);
  fisher_yates(shard_ids, rng);

  PartitionPlan plan;
  plan.mode = PartitionMode::shard;
  plan.workers.resize(num_workers);
  for (std::size_t u = 0; u < num_workers; ++u) {
    auto& list = plan.workers[u];
    for (std::size_t s = 0; s < shards_per_worker; ++s) {
      const std::size_t shard = shard_ids[u * shards_per_worker + s];
      auto first = sorted.begin() + static_cast<std::ptrdiff_t>(shard * shard_size);
      list.insert(list.end(), first, first + static_cast<std::ptrdiff_t>(shard_size));
    }
    std::sort(list.begin(), list.end());
  }
  return plan;
}

GlobalShared build_global_shared(const Dataset& ds, std::size_t n_train, std::size_t n_score,
                                 const PartitionPlan& plan, std::uint64_t seed) {
  const std::size_t C = ds.num_classes;
  std::vector<bool> taken(ds.size(), false);
  for (const auto& w : plan.workers)
    for (std::size_t i : w) taken[i] = true;

  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!taken[i]) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  RngStream rng = RngStream::derive(seed, Stream::global_shared);
  GlobalShared shared;
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t tr = n_train / C + (c < n_train % C ? 1 : 0);
    const std::size_t sc = n_score / C + (c < n_score % C ? 1 : 0);
    auto& pool = by_class[c];
    if (pool.size() < tr + sc)
      throw std::invalid_argument("build_global_shared: insufficient held-out samples for class " +
                                  std::to_string(c) + " (need " + std::to_string(tr + sc) +
                                  ", have " + std::to_string(pool.size()) + ")");
    fisher_yates(pool, rng);
    shared.train.insert(shared.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(tr));
    shared.score.insert(shared.score.end(), pool.begin() + static_cast<std::ptrdiff_t>(tr),
                        pool.begin() + static_cast<std::ptrdiff_t>(tr + sc));
  }
  std::sort(shared.train.begin(), shared.train.end());
  std::sort(shared.score.begin(), shared.score.end());
  return shared;
}

LabelHistogram label_histogram(const SampleView& samples) {
  if (samples.size() == 0) throw std::invalid_argument("label_histogram: empty sample set");
  LabelHistogram h;
  h.counts.assign(samples.data->num_classes, 0);
  for (std::size_t k = 0; k < samples.size(); ++k) ++h.counts[static_cast<std::size_t>(samples.label(k))];
  h.probs.resize(h.counts.size());
  for (std::size_t c = 0; c < h.counts.size(); ++c)
    h.probs[c] = static_cast<double>(h.counts[c]) / static_cast<double>(samples.size());
  return h;
}

LabelHistogram label_histogram(const Dataset& ds) {
  const auto idx = all_indices(ds);
  return label_histogram(view_of(ds, idx));
}

double emd(const LabelHistogram& p, const LabelHistogram& q) {
  if (p.probs.size() != q.probs.size()) throw std::invalid_argument("emd: class count mismatch");
  if (p.counts.size() == p.probs.size() && q.counts.size() == q.probs.size()) {
    const std::uint64_t np = std::accumulate(p.counts.begin(), p.counts.end(), std::uint64_t{0});
    const std::uint64_t nq = std::accumulate(q.counts.begin(), q.counts.end(), std::uint64_t{0});
    std::uint64_t num = 0;
    for (std::size_t c = 0; c < p.counts.size(); ++c) {
      const std::uint64_t a = p.counts[c] * nq;
      const std::uint64_t b = q.counts[c] * np;
      num += a > b ? a - b : b - a;
    }
    return static_cast<double>(num) / static_cast<double>(np * nq);
  }
  double s = 0.0;
  for (std::size_t c = 0; c < p.probs.size(); ++c) s += std::abs(p.probs[c] - q.probs[c]);
  return s;
}

}  // namespace cbdsl

namespace cbdsl {

Batch draw_batch(const Dataset& ds, std::span<const std::size_t> pool, std::size_t batch_size,
                 RngStream& rng) {
  if (pool.empty()) throw std::invalid_argument("draw_batch: empty training pool");
  Batch batch;
  batch.data = &ds;
  if (batch_size >= pool.size()) {
    batch.indices.assign(pool.begin(), pool.end());
    return batch;
  }
  // Floyd's algorithm: batch_size distinct positions, in draw order.
  std::vector<std::size_t> chosen;
  chosen.reserve(batch_size);
  for (std::size_t j = pool.size() - batch_size; j < pool.size(); ++j) {
    const std::size_t r = rng.index(j + 1);
    const bool seen = std::find(chosen.begin(), chosen.end(), r) != chosen.end();
    chosen.push_back(seen ? j : r);
  }
  batch.indices.reserve(batch_size);
  for (std::size_t pos : chosen) batch.indices.push_back(pool[pos]);
  return batch;
}

}  // namespace cbdsl
