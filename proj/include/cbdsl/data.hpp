#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbdsl/rng.hpp"

namespace cbdsl {

// Labelled samples with row-major features. Immutable once built; every
// partition, batch and shared set refers to it by index.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  void push_back(std::span<const double> x, int label);
  void validate() const;
};

// Index view over a parent dataset. The indices are borrowed.
struct SampleView {
  const Dataset* data = nullptr;
  std::span<const std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  std::span<const double> row(std::size_t k) const { return data->row(indices[k]); }
  int label(std::size_t k) const { return data->labels[indices[k]]; }
};

// A mini-batch is a view with its own index storage.
struct Batch {
  const Dataset* data = nullptr;
  std::vector<std::size_t> indices;

  SampleView view() const { return {data, indices}; }
};

std::vector<std::size_t> all_indices(const Dataset& ds);
inline SampleView view_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
  return {&ds, idx};
}

// Big-endian IDX pair (images 0x00000803, labels 0x00000801). Pixels are
// scaled to [0, 1] and images flattened row-major.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes = 10);
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes = 10);

// Gaussian blobs with unit noise, one mean per class. The means depend only on
// `seed`; `split` selects an independent noise draw around the same means
// (e.g. a test set).
Dataset synthetic_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                        double separation, std::uint64_t seed, std::uint64_t split = 0);

enum class PartitionMode { iid, shard };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::iid;
  std::vector<std::vector<std::size_t>> workers;  // sorted ascending

  std::uint64_t digest() const;
};

PartitionPlan partition_iid(const Dataset& ds, std::size_t num_workers, std::size_t per_worker,
                            std::uint64_t seed);
PartitionPlan partition_shards(const Dataset& ds, std::size_t num_shards,
                               std::size_t shards_per_worker, std::size_t num_workers,
                               std::uint64_t seed);

// Held-out shared data. `train` may be mixed into worker training pools;
// `score` is only ever evaluated, never trained on.
struct GlobalShared {
  std::vector<std::size_t> train;
  std::vector<std::size_t> score;
};

GlobalShared build_global_shared(const Dataset& ds, std::size_t n_train, std::size_t n_score,
                                 const PartitionPlan& plan, std::uint64_t seed);

struct LabelHistogram {
  std::vector<double> probs;
  // Raw class counts when built from samples; empty for free-form histograms.
  std::vector<std::uint64_t> counts;
};

LabelHistogram label_histogram(const SampleView& samples);
LabelHistogram label_histogram(const Dataset& ds);

// Sum over classes of |p(c) - q(c)|, in [0, 2]. When both histograms carry
// counts the sum is formed in integer arithmetic and rounded once.
double emd(const LabelHistogram& p, const LabelHistogram& q);

}  // namespace cbdsl

namespace cbdsl {

// Uniform mini-batch over `pool` without replacement; the whole pool when
// batch_size >= pool size.
Batch draw_batch(const Dataset& ds, std::span<const std::size_t> pool, std::size_t batch_size,
                 RngStream& rng);

}  // namespace cbdsl
