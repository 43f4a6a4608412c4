#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "cbdsl/data.hpp"
#include "cbdsl/model.hpp"

using namespace cbdsl;

namespace {

void put_be32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> b;
  put_be32(b, 0x00000803);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels, std::uint32_t magic = 0x00000801) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

void expect_error_containing(const std::function<void()>& fn, const std::string& text) {
  try {
    fn();
    FAIL() << "expected error containing '" << text << "'";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(text), std::string::npos) << e.what();
  }
}

Dataset balanced(std::size_t C, std::size_t per_class) {
  Dataset ds;
  ds.dim = 1;
  ds.num_classes = C;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < per_class; ++k) ds.push_back(std::vector<double>{0.0}, static_cast<int>(c));
  return ds;
}

std::size_t distinct_labels(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::set<int> s;
  for (std::size_t i : idx) s.insert(ds.labels[i]);
  return s.size();
}

}  // namespace

TEST(Idx, HandBuiltPair) {
  const auto img = idx_images(1, 2, 2, {0, 128, 255, 0});
  const auto lab = idx_labels({7});
  const auto ds = parse_idx(img, lab);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.dim, 4u);
  EXPECT_EQ(ds.labels[0], 7);
  const auto x = ds.row(0);
  EXPECT_EQ(x[0], 0.0);
  EXPECT_EQ(x[1], 128.0 / 255.0);
  EXPECT_EQ(x[2], 1.0);
  EXPECT_EQ(x[3], 0.0);
}

TEST(Idx, LabelMagicOnLabelsIsBadMagic) {
  const auto img = idx_images(1, 2, 2, {0, 1, 2, 3});
  const auto lab = idx_labels({7}, 0x00000803);
  expect_error_containing([&] { parse_idx(img, lab); }, "bad magic");
}

TEST(Idx, EmptyFileIsTruncatedHeader) {
  const std::vector<std::uint8_t> empty;
  expect_error_containing([&] { parse_idx(empty, idx_labels({1})); }, "truncated header");
}

TEST(Idx, CountMismatch) {
  const auto img = idx_images(2, 1, 1, {0, 1});
  expect_error_containing([&] { parse_idx(img, idx_labels({1})); }, "count mismatch");
}

TEST(Idx, TruncatedPayload) {
  const auto img = idx_images(2, 2, 2, {0, 1, 2});
  expect_error_containing([&] { parse_idx(img, idx_labels({1, 2})); }, "truncated payload");
}

TEST(Idx, LoadsFromFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "cbdsl_idx_test";
  std::filesystem::create_directories(dir);
  const auto img = idx_images(1, 2, 2, {0, 128, 255, 0});
  const auto lab = idx_labels({7});
  std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(img.data()), img.size());
  std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), lab.size());
  const auto ds = load_idx((dir / "img").string(), (dir / "lab").string());
  EXPECT_EQ(ds.labels[0], 7);
  EXPECT_ANY_THROW(load_idx((dir / "missing").string(), (dir / "lab").string()));
}

TEST(Synthetic, Counts) {
  const auto ds = synthetic_blobs(2, 5, 3, 1.0, 1);
  ASSERT_EQ(ds.size(), 10u);
  EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0), 5);
  EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 5);
}

TEST(Synthetic, Deterministic) {
  EXPECT_EQ(synthetic_blobs(3, 20, 4, 2.0, 9).features, synthetic_blobs(3, 20, 4, 2.0, 9).features);
  EXPECT_NE(synthetic_blobs(3, 20, 4, 2.0, 9, 0).features, synthetic_blobs(3, 20, 4, 2.0, 9, 1).features);
}

TEST(Synthetic, MeansRespectSeparation) {
  for (std::size_t dim : {2u, 20u}) {
    const auto ds = synthetic_blobs(10, 2000, dim, 6.0, 4);
    std::vector<std::vector<double>> mean(10, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t d = 0; d < dim; ++d) mean[ds.labels[i]][d] += ds.row(i)[d] / 2000.0;
    for (std::size_t a = 0; a < 10; ++a)
      for (std::size_t b = a + 1; b < 10; ++b) EXPECT_GT(distance(mean[a], mean[b]), 6.0 - 0.2);
  }
}

TEST(Synthetic, WellSeparatedBlobsAreFitExactly) {
  const auto ds = synthetic_blobs(2, 50, 2, 10.0, 5);
  const ModelSpec spec{ModelKind::softmax_regression, 2, {}, 2};
  const auto idx = all_indices(ds);
  const auto sv = view_of(ds, idx);
  ParameterVector w(spec.parameter_count());
  for (int it = 0; it < 2000; ++it) {
    const auto g = gradient(spec, w, sv);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= 0.1 * g[j];
  }
  EXPECT_EQ(accuracy(spec, w, sv), 1.0);
}

TEST(PartitionIid, FiftyWorkersOfThreeHundred) {
  const auto ds = balanced(10, 6000);
  const auto plan = partition_iid(ds, 50, 300, 1);
  ASSERT_EQ(plan.workers.size(), 50u);
  std::set<std::size_t> all;
  for (const auto& w : plan.workers) {
    EXPECT_EQ(w.size(), 300u);
    all.insert(w.begin(), w.end());
  }
  EXPECT_EQ(all.size(), 15000u);
}

TEST(PartitionIid, SingleWorkerIdentity) {
  const auto ds = balanced(3, 4);
  const auto plan = partition_iid(ds, 1, ds.size(), 2);
  EXPECT_EQ(plan.workers[0], all_indices(ds));
}

TEST(PartitionIid, TwoWorkersCoverTenSamples) {
  const auto ds = balanced(2, 5);
  const auto plan = partition_iid(ds, 2, 5, 3);
  std::vector<std::size_t> merged = plan.workers[0];
  merged.insert(merged.end(), plan.workers[1].begin(), plan.workers[1].end());
  std::sort(merged.begin(), merged.end());
  EXPECT_EQ(merged, all_indices(ds));
}

TEST(PartitionIid, InsufficientSamples) { EXPECT_THROW(partition_iid(balanced(2, 5), 3, 4, 1), std::invalid_argument); }

TEST(PartitionShards, FullScaleHeterogeneity) {
  const auto ds = balanced(10, 6000);
  const auto plan = partition_shards(ds, 200, 2, 50, 7);
  std::set<std::size_t> all;
  for (const auto& w : plan.workers) {
    EXPECT_EQ(w.size(), 600u);
    EXPECT_LE(distinct_labels(ds, w), 4u);
    all.insert(w.begin(), w.end());
  }
  EXPECT_EQ(all.size(), 30000u);
}

TEST(PartitionShards, SingleClassDataset) {
  const auto ds = balanced(1, 100);
  const auto plan = partition_shards(ds, 10, 1, 10, 1);
  for (const auto& w : plan.workers) EXPECT_EQ(distinct_labels(ds, w), 1u);
}

TEST(PartitionShards, AtMostFourLabelsPerWorker) {
  const auto ds = balanced(10, 100);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = partition_shards(ds, 20, 2, 10, seed);
    for (const auto& w : plan.workers) {
      EXPECT_EQ(w.size(), 100u);
      const auto counts = label_histogram(view_of(ds, w)).counts;
      EXPECT_LE(counts.size() - static_cast<std::size_t>(std::count(counts.begin(), counts.end(), 0u)), 4u);
    }
  }
}

TEST(PartitionShards, Infeasible) {
  EXPECT_THROW(partition_shards(balanced(2, 5), 4, 3, 2, 1), std::invalid_argument);
  EXPECT_THROW(partition_shards(balanced(2, 5), 20, 1, 2, 1), std::invalid_argument);
}

TEST(PartitionProperties, DisjointExactCardinality) {
  const auto ds = synthetic_blobs(10, 300, 10, 3.0, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& plan : {partition_iid(ds, 7, 123, seed), partition_shards(ds, 30, 3, 9, seed)}) {
      std::set<std::size_t> all;
      std::size_t total = 0;
      for (const auto& w : plan.workers) {
        EXPECT_TRUE(std::is_sorted(w.begin(), w.end()));
        EXPECT_EQ(w.size(), plan.workers[0].size());
        all.insert(w.begin(), w.end());
        total += w.size();
        for (std::size_t i : w) EXPECT_LT(i, ds.size());
      }
      EXPECT_EQ(all.size(), total);
    }
  }
}

TEST(GlobalShared, StratifiedCounts) {
  const auto ds = balanced(10, 6000);
  const auto plan = partition_shards(ds, 200, 2, 50, 1);
  const auto g = build_global_shared(ds, 600, 2000, plan, 1);
  const auto ht = label_histogram(view_of(ds, g.train));
  const auto hs = label_histogram(view_of(ds, g.score));
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(ht.counts[c], 60u);
    EXPECT_EQ(hs.counts[c], 200u);
  }
}

TEST(GlobalShared, EmptyTrainPart) {
  const auto ds = balanced(10, 100);
  const auto plan = partition_iid(ds, 2, 100, 1);
  const auto g = build_global_shared(ds, 0, 50, plan, 1);
  EXPECT_TRUE(g.train.empty());
  EXPECT_EQ(g.score.size(), 50u);
}

TEST(GlobalShared, DisjointFromPlanAndEachOther) {
  const auto ds = balanced(10, 6000);
  const auto plan = partition_iid(ds, 50, 300, 4);
  const auto g = build_global_shared(ds, 600, 2000, plan, 4);
  std::set<std::size_t> used;
  for (const auto& w : plan.workers) used.insert(w.begin(), w.end());
  for (std::size_t i : g.train) EXPECT_FALSE(used.contains(i));
  for (std::size_t i : g.score) EXPECT_FALSE(used.contains(i));
  std::vector<std::size_t> both;
  std::set_intersection(g.train.begin(), g.train.end(), g.score.begin(), g.score.end(), std::back_inserter(both));
  EXPECT_TRUE(both.empty());
}

TEST(GlobalShared, RemainderGoesToLowClasses) {
  const auto ds = balanced(10, 50);
  const auto plan = partition_iid(ds, 1, 10, 1);
  const auto g = build_global_shared(ds, 13, 0, plan, 1);
  const auto h = label_histogram(view_of(ds, g.train));
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[2], 2u);
  EXPECT_EQ(h.counts[3], 1u);
}

TEST(GlobalShared, Insufficient) {
  const auto ds = balanced(10, 10);
  const auto plan = partition_iid(ds, 1, 50, 1);
  EXPECT_THROW(build_global_shared(ds, 100, 100, plan, 1), std::invalid_argument);
}

TEST(Histogram, TwoClasses) {
  const auto ds = balanced(10, 300);
  std::vector<std::size_t> idx(600);
  std::iota(idx.begin(), idx.end(), 0);
  const auto h = label_histogram(view_of(ds, idx));
  EXPECT_EQ(h.probs[0], 0.5);
  EXPECT_EQ(h.probs[1], 0.5);
  for (std::size_t c = 2; c < 10; ++c) EXPECT_EQ(h.probs[c], 0.0);
}

TEST(Histogram, BalancedIsUniform) {
  const auto h = label_histogram(balanced(10, 37));
  for (double p : h.probs) EXPECT_NEAR(p, 0.1, 1e-15);
}

TEST(Histogram, SingleSampleOneHot) {
  const auto ds = balanced(10, 1);
  const std::vector<std::size_t> idx{3};
  const auto h = label_histogram(view_of(ds, idx));
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(h.probs[c], c == 3 ? 1.0 : 0.0);
}

TEST(Histogram, EmptyThrows) {
  const auto ds = balanced(2, 1);
  const std::vector<std::size_t> none;
  EXPECT_THROW(label_histogram(view_of(ds, none)), std::invalid_argument);
}

TEST(Emd, IdenticalIsZero) {
  const auto h = label_histogram(balanced(10, 3));
  EXPECT_EQ(emd(h, h), 0.0);
}

TEST(Emd, TwoShardWorkerAgainstUniform) {
  const auto ds = balanced(10, 300);
  std::vector<std::size_t> idx(600);
  std::iota(idx.begin(), idx.end(), 0);
  EXPECT_EQ(emd(label_histogram(view_of(ds, idx)), label_histogram(ds)), 1.6);
}

TEST(Emd, MixingSharedTrainingHalvesDistance) {
  const auto ds = balanced(10, 420);
  std::vector<std::size_t> local, shared;
  for (std::size_t i = 0; i < 300; ++i) {
    local.push_back(i);
    local.push_back(420 + i);
  }
  for (std::size_t c = 0; c < 10; ++c)
    for (std::size_t k = 0; k < 60; ++k) shared.push_back(c * 420 + 360 + k);
  std::vector<std::size_t> pool = local;
  pool.insert(pool.end(), shared.begin(), shared.end());
  const auto h = label_histogram(view_of(ds, pool));
  EXPECT_EQ(h.probs[0], 0.3);
  EXPECT_EQ(h.probs[1], 0.3);
  EXPECT_EQ(emd(h, label_histogram(ds)), 0.8);
}

TEST(Emd, LengthMismatch) {
  EXPECT_THROW(emd(LabelHistogram{{1.0}, {}}, LabelHistogram{{0.5, 0.5}, {}}), std::invalid_argument);
}

TEST(Emd, SymmetricAndTriangle) {
  auto rng = RngStream::derive(11, Stream::synthetic);
  auto random_hist = [&] {
    LabelHistogram h;
    double s = 0.0;
    for (int c = 0; c < 6; ++c) {
      h.probs.push_back(rng.uniform());
      s += h.probs.back();
    }
    for (double& p : h.probs) p /= s;
    return h;
  };
  for (int k = 0; k < 200; ++k) {
    const auto a = random_hist(), b = random_hist(), c = random_hist();
    EXPECT_EQ(emd(a, b), emd(b, a));
    EXPECT_LE(emd(a, c), emd(a, b) + emd(b, c) + 1e-15);
    EXPECT_GE(emd(a, b), 0.0);
    EXPECT_LE(emd(a, b), 2.0 + 1e-15);
  }
}

TEST(Emd, MixingBalancedSharedNeverIncreases) {
  const auto ds = balanced(10, 400);
  const auto pop = label_histogram(ds);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = partition_shards(ds, 100, 2, 10, seed);
    const auto g = build_global_shared(ds, 100 + 10 * seed, 0, plan, seed);
    for (const auto& w : plan.workers) {
      auto pool = w;
      pool.insert(pool.end(), g.train.begin(), g.train.end());
      EXPECT_LE(emd(label_histogram(view_of(ds, pool)), pop), emd(label_histogram(view_of(ds, w)), pop));
    }
  }
}

TEST(Batch, DrawsDistinctFromPool) {
  const auto ds = balanced(3, 10);
  const std::vector<std::size_t> pool{1, 4, 7, 9, 12, 20, 25};
  auto rng = RngStream::derive(1, Stream::batch);
  const auto b = draw_batch(ds, pool, 4, rng);
  std::set<std::size_t> s(b.indices.begin(), b.indices.end());
  EXPECT_EQ(s.size(), 4u);
  for (std::size_t i : b.indices) EXPECT_NE(std::find(pool.begin(), pool.end(), i), pool.end());
  auto rng2 = RngStream::derive(1, Stream::batch);
  EXPECT_EQ(draw_batch(ds, pool, 4, rng2).indices, b.indices);
  auto rng3 = RngStream::derive(1, Stream::batch);
  EXPECT_EQ(draw_batch(ds, pool, 100, rng3).indices, pool);
}
