#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gaitset/grad_check.hpp"
#include "gaitset/metric.hpp"
#include "oracles.hpp"

using namespace gaitset;
namespace gt = gaitset::testing;

namespace {

// flat [batch, strips, d] values as a leaf tensor
template <typename T>
BasicTensor<T> emb_tensor(const std::vector<double>& vals, int64_t batch, int64_t strips,
                          int64_t d) {
  Storage<T> s(Shape{batch, strips, d});
  for (size_t i = 0; i < vals.size(); ++i) s.data[i] = static_cast<T>(vals[i]);
  return BasicTensor<T>::leaf(std::move(s), true);
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.c1 = 2; c.c2 = 2; c.c3 = 3; c.c4 = 3; c.c5 = 4; c.c6 = 4;
  c.scales = 2;
  c.embed_dim = 2;
  c.input_h = 8;
  c.input_w = 8;
  return c;
}

// a batch of 4 single-frame sets on the tiny geometry
Tensor random_batch_frames(Rng& rng, int64_t sets, int64_t frames_per_set) {
  return Tensor::leaf(
      gt::random_storage<float>({sets * frames_per_set, 1, 8, 8}, rng, 0.0, 1.0));
}

SamplingView uniform_view(int64_t ids, int64_t seqs, int64_t frames) {
  SamplingView v;
  v.identity_count = ids;
  v.sequence_count = [seqs](int64_t) { return seqs; };
  v.frame_count = [frames](int64_t, int64_t) { return frames; };
  return v;
}

}  // namespace

TEST(TripletLoss, WellSeparatedClustersGiveZero) {
  // intra-class spread 1, inter-class gap 100: every hinge is negative
  std::vector<double> vals = {0.0, 1.0, 100.0, 101.0};
  auto e = emb_tensor<float>(vals, 4, 1, 1);
  TripletLossReport rep;
  auto loss = batch_all_triplet(e, {0, 0, 1, 1}, 0.2, &rep);
  EXPECT_EQ(loss.item(), 0.0f);
  EXPECT_EQ(rep.total, 0.0);
  EXPECT_EQ(rep.nonzero_fraction, 0.0);
  EXPECT_EQ(rep.valid_triplets, 8);
}

TEST(TripletLoss, HandComputedTwoClusterValue) {
  // {0,1} vs {1.5,2.5}, margin 0.2; hinges worked out on paper
  std::vector<double> vals = {0.0, 1.0, 1.5, 2.5};
  std::vector<int> labels = {0, 0, 1, 1};
  auto e = emb_tensor<double>(vals, 4, 1, 1);
  TripletLossReport rep;
  batch_all_triplet(e, labels, 0.2, &rep);
  double oracle_frac = 0;
  const double oracle = gt::brute_force_triplet(vals, 4, 1, 1, labels, 0.2, nullptr, &oracle_frac);
  EXPECT_NEAR(rep.total, oracle, 1e-12);
  EXPECT_EQ(rep.nonzero_fraction, oracle_frac);
  // anchor 0 with positive 1: d_ap=1, negatives at 1.5 and 2.5 -> hinges
  // 0.2+1-1.5=-0.3 and 0.2+1-2.5=-1.3; anchor 1: d_ap=1, d_an=0.5 and 1.5 ->
  // hinges 0.7 and -0.3; anchor 2: d_ap=1, d_an=1.5,0.5 -> -0.3, 0.7;
  // anchor 3: d_ap=1, d_an=2.5,1.5 -> -1.3, -0.3. Active: {0.7, 0.7}.
  EXPECT_NEAR(rep.total, 0.7, 1e-12);
  EXPECT_NEAR(rep.nonzero_fraction, 2.0 / 8.0, 1e-12);
}

TEST(TripletLoss, MatchesBruteForceOracleOnRandomBatches) {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t p = rng.uniform_int(2, 4), k = rng.uniform_int(2, 4);
    const int64_t B = p * k, S = rng.uniform_int(1, 5), d = rng.uniform_int(1, 6);
    std::vector<int> labels;
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i * 7));
    auto storage = gt::random_storage<double>({B, S, d}, rng);
    std::vector<double> flat(storage.data.begin(), storage.data.end());
    auto e = BasicTensor<double>::leaf(std::move(storage), true);
    TripletLossReport rep;
    batch_all_triplet(e, labels, 0.2, &rep);
    std::vector<double> oracle_strips;
    double oracle_frac = 0;
    const double oracle =
        gt::brute_force_triplet(flat, B, S, d, labels, 0.2, &oracle_strips, &oracle_frac);
    ASSERT_NEAR(rep.total, oracle, 1e-9) << "trial " << trial;
    ASSERT_NEAR(rep.nonzero_fraction, oracle_frac, 1e-12);
    for (int64_t t = 0; t < S; ++t)
      ASSERT_NEAR(rep.per_strip[size_t(t)], oracle_strips[size_t(t)], 1e-9);
  }
}

TEST(TripletLoss, BatchPermutationLeavesTotalBitIdentical) {
  Rng rng(505);
  auto storage = gt::random_storage<float>({12, 4, 5}, rng);
  std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  TripletLossReport base;
  batch_all_triplet(BasicTensor<float>::leaf(storage), labels, 0.2, &base);
  const int64_t block = 4 * 5;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int64_t> perm(12);
    for (int64_t i = 0; i < 12; ++i) perm[size_t(i)] = i;
    rng.shuffle(perm);
    Storage<float> shuffled(Shape{12, 4, 5});
    std::vector<int> plabels(12);
    for (int64_t i = 0; i < 12; ++i) {
      std::copy_n(storage.data.begin() + perm[size_t(i)] * block, block,
                  shuffled.data.begin() + i * block);
      plabels[size_t(i)] = labels[size_t(perm[size_t(i)])];
    }
    TripletLossReport rep;
    batch_all_triplet(BasicTensor<float>::leaf(std::move(shuffled)), plabels, 0.2, &rep);
    ASSERT_EQ(rep.total, base.total) << "trial " << trial;
    ASSERT_EQ(rep.nonzero_fraction, base.nonzero_fraction);
  }
}

TEST(TripletLoss, ExactZeroHingeIsNotActive) {
  // margin 0.25 and distances 0.25 / 0.5 are exact in binary; the triplet
  // (0,1,2) lands on hinge == 0 and must not count, (1,0,2) gives 0.25
  std::vector<double> vals = {0.0, 0.25, 0.5};
  auto e = emb_tensor<double>(vals, 3, 1, 1);
  TripletLossReport rep;
  batch_all_triplet(e, {0, 0, 1}, 0.25, &rep);
  EXPECT_EQ(rep.total, 0.25);
  EXPECT_EQ(rep.valid_triplets, 2);
  EXPECT_EQ(rep.nonzero_fraction, 0.5);
}

TEST(TripletLoss, PerStripMeansAndTotalAverageOverStrips) {
  // strip 0 as in the hand-computed case (0.7); strip 1 well separated (0)
  std::vector<double> vals = {0.0, 100.0, 1.0, 101.0, 1.5, 200.0, 2.5, 201.0};
  auto e = emb_tensor<double>(vals, 4, 2, 1);
  TripletLossReport rep;
  batch_all_triplet(e, {0, 0, 1, 1}, 0.2, &rep);
  EXPECT_NEAR(rep.per_strip[0], 0.7, 1e-12);
  EXPECT_EQ(rep.per_strip[1], 0.0);
  EXPECT_NEAR(rep.total, 0.35, 1e-12);
}

TEST(TripletLoss, DegenerateBatchesRejected) {
  Rng rng(6);
  auto vals = gt::random_storage<float>({4, 1, 2}, rng);
  auto e = BasicTensor<float>::leaf(vals);
  EXPECT_THROW(batch_all_triplet(e, {3, 3, 3, 3}, 0.2), ConfigError);   // no negative
  EXPECT_THROW(batch_all_triplet(e, {0, 1, 2, 3}, 0.2), ConfigError);   // no positive
  EXPECT_THROW(batch_all_triplet(e, {0, 1}, 0.2), ShapeError);          // label count
  EXPECT_THROW(batch_all_triplet(BasicTensor<float>::leaf(gt::random_storage<float>({4, 2}, rng)),
                                 {0, 0, 1, 1}, 0.2),
               ShapeError);
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  Rng rng(707);
  auto e = BasicTensor<double>::leaf(gt::random_storage<double>({6, 2, 3}, rng), true);
  std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  const auto report = grad_check<double>(
      [&] { return batch_all_triplet(e, labels, 0.5); }, {e});
  EXPECT_LT(report.max_rel_err, 1e-5) << report.worst;
}

TEST(TripletLoss, AllActiveBatchReportsFullFraction) {
  // every sample at the same point: all distances zero, every hinge = margin
  std::vector<double> vals = {0.0, 0.0, 0.0, 0.0};
  auto e = emb_tensor<double>(vals, 4, 1, 1);
  TripletLossReport rep;
  batch_all_triplet(e, {0, 0, 1, 1}, 0.2, &rep);
  EXPECT_NEAR(rep.total, 0.2, 1e-12);
  EXPECT_EQ(rep.nonzero_fraction, 1.0);
}

TEST(Sampler, LabelMultisetIsPTimesK) {
  const auto view = uniform_view(10, 6, 50);
  BatchSpec spec;
  spec.p = 3;
  spec.k = 4;
  spec.m = 5;
  const auto batch = sample_batch(view, spec, 99);
  ASSERT_EQ(batch.size(), 12u);
  std::map<int64_t, int> counts;
  for (const auto& item : batch) ++counts[item.identity];
  EXPECT_EQ(counts.size(), 3u);
  for (const auto& [id, c] : counts) {
    EXPECT_GE(id, 0);
    EXPECT_LT(id, 10);
    EXPECT_EQ(c, 4);
  }
  for (const auto& item : batch) EXPECT_EQ(item.frames.size(), 5u);
}

TEST(Sampler, FixedSeedReproduces) {
  const auto view = uniform_view(20, 8, 40);
  BatchSpec spec;
  spec.p = 4;
  spec.k = 3;
  spec.m = 10;
  const auto a = sample_batch(view, spec, 1234);
  const auto b = sample_batch(view, spec, 1234);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].identity, b[i].identity);
    EXPECT_EQ(a[i].sequence, b[i].sequence);
    EXPECT_EQ(a[i].frames, b[i].frames);
  }
  const auto c = sample_batch(view, spec, 1235);
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i)
    differs = differs || a[i].identity != c[i].identity || a[i].sequence != c[i].sequence ||
              a[i].frames != c[i].frames;
  EXPECT_TRUE(differs);
}

TEST(Sampler, EnoughSequencesAreDrawnWithoutReplacement) {
  const auto view = uniform_view(5, 10, 40);
  BatchSpec spec;
  spec.p = 2;
  spec.k = 4;
  spec.m = 3;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto batch = sample_batch(view, spec, seed);
    std::map<int64_t, std::set<int64_t>> seqs;
    for (const auto& item : batch) {
      EXPECT_TRUE(seqs[item.identity].insert(item.sequence).second)
          << "sequence repeated although 10 were available";
      std::set<int64_t> dedup(item.frames.begin(), item.frames.end());
      EXPECT_EQ(dedup.size(), item.frames.size());
    }
  }
}

TEST(Sampler, ShortSuppliesFallBackToReplacement) {
  const auto view = uniform_view(4, 2, 5);  // fewer sequences than k, frames than m
  BatchSpec spec;
  spec.p = 2;
  spec.k = 6;
  spec.m = 30;
  const auto batch = sample_batch(view, spec, 7);
  ASSERT_EQ(batch.size(), 12u);
  for (const auto& item : batch) {
    EXPECT_GE(item.sequence, 0);
    EXPECT_LT(item.sequence, 2);
    ASSERT_EQ(item.frames.size(), 30u);
    std::set<int64_t> dedup(item.frames.begin(), item.frames.end());
    EXPECT_LE(dedup.size(), 5u);   // pigeonhole: must repeat
    for (int64_t f : item.frames) {
      EXPECT_GE(f, 0);
      EXPECT_LT(f, 5);
    }
  }
}

TEST(Sampler, RejectsImpossibleRequests) {
  BatchSpec bad;
  bad.p = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = BatchSpec{};
  bad.k = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  BatchSpec spec;
  spec.p = 8;
  spec.k = 2;
  spec.m = 2;
  EXPECT_THROW(sample_batch(uniform_view(3, 4, 10), spec, 0), DataError);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  // p=1, grad 0.5, lr 0.1: bias correction makes the first step
  // lr * g / (|g| + eps) ~= lr
  ParameterStore store;
  store.insert("w", Tensor::from_data({1}, {1.0f}, true));
  auto loss = scale(sum_all(store.get("w")), 0.5f);
  loss.backward();
  AdamState opt;
  opt.lr = 0.1;
  adam_step(store, opt);
  EXPECT_NEAR(store.get("w").data()[0], 0.9f, 1e-6f);
  EXPECT_EQ(opt.step, 1);
}

TEST(Adam, RepeatedGradientKeepsMovingDownhill) {
  ParameterStore store;
  store.insert("w", Tensor::from_data({1}, {1.0f}, true));
  AdamState opt;
  opt.lr = 0.01;
  float prev = 1.0f;
  for (int i = 0; i < 5; ++i) {
    store.zero_grads();
    auto loss = scale(sum_all(store.get("w")), 2.0f);
    loss.backward();
    adam_step(store, opt);
    const float cur = store.get("w").data()[0];
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(TrainStep, NoActiveHingeLeavesParametersBitIdentical) {
  // both label-0 sets are the same frames, ditto label-1: d(a,p) = 0 exactly,
  // so with margin 0 no hinge can be positive and the step must be a no-op
  auto cfg = tiny_config();
  auto model = GaitSetModel::init(cfg, 42);
  Rng rng(9);
  auto set_a = gt::random_storage<float>({3, 1, 8, 8}, rng, 0.0, 1.0);
  auto set_b = gt::random_storage<float>({3, 1, 8, 8}, rng, 0.0, 1.0);
  Storage<float> frames(Shape{12, 1, 8, 8});
  const int64_t block = 3 * 64;
  for (int copy = 0; copy < 2; ++copy) {
    std::copy_n(set_a.data.begin(), block, frames.data.begin() + copy * block);
    std::copy_n(set_b.data.begin(), block, frames.data.begin() + (2 + copy) * block);
  }
  std::map<std::string, std::vector<float>> before;
  for (const auto& [name, t] : model.params().items())
    before[name] = std::vector<float>(t.data().begin(), t.data().end());
  AdamState opt;
  const auto rep = train_step(model, Tensor::leaf(std::move(frames)), {3, 3, 3, 3}, {0, 0, 1, 1},
                              opt, 0.0);
  EXPECT_EQ(rep.nonzero_fraction, 0.0);
  EXPECT_EQ(opt.step, 0);
  for (const auto& [name, t] : model.params().items()) {
    const auto now = t.data();
    ASSERT_TRUE(std::equal(now.begin(), now.end(), before[name].begin())) << name;
  }
}

TEST(TrainStep, ActiveHingeUpdatesParameters) {
  auto cfg = tiny_config();
  auto model = GaitSetModel::init(cfg, 42);
  Rng rng(10);
  auto frames = random_batch_frames(rng, 4, 3);
  std::map<std::string, std::vector<float>> before;
  for (const auto& [name, t] : model.params().items())
    before[name] = std::vector<float>(t.data().begin(), t.data().end());
  AdamState opt;
  const auto rep = train_step(model, frames, {3, 3, 3, 3}, {0, 0, 1, 1}, opt, 0.2);
  ASSERT_GT(rep.nonzero_fraction, 0.0);
  EXPECT_EQ(opt.step, 1);
  bool changed = false;
  for (const auto& [name, t] : model.params().items()) {
    const auto now = t.data();
    changed = changed || !std::equal(now.begin(), now.end(), before[name].begin());
  }
  EXPECT_TRUE(changed);
}

TEST(TrainStep, IdenticalRunsProduceIdenticalParameters) {
  auto cfg = tiny_config();
  Rng rng(11);
  auto frames = random_batch_frames(rng, 4, 2);
  auto run = [&](uint64_t seed) {
    auto model = GaitSetModel::init(cfg, seed);
    AdamState opt;
    for (int it = 0; it < 3; ++it)
      train_step(model, frames, {2, 2, 2, 2}, {0, 0, 1, 1}, opt, 0.2);
    std::map<std::string, std::vector<float>> out;
    for (const auto& [name, t] : model.params().items())
      out[name] = std::vector<float>(t.data().begin(), t.data().end());
    return out;
  };
  const auto a = run(77), b = run(77);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, vals] : a) {
    const auto& other = b.at(name);
    ASSERT_EQ(vals.size(), other.size());
    for (size_t i = 0; i < vals.size(); ++i)
      ASSERT_EQ(vals[i], other[i]) << name << "[" << i << "]";
  }
}

TEST(TrainStep, LossDecreasesOnAFixedBatch) {
  auto cfg = tiny_config();
  auto model = GaitSetModel::init(cfg, 5);
  Rng rng(12);
  auto frames = random_batch_frames(rng, 4, 2);
  AdamState opt;
  opt.lr = 1e-3;
  double first = 0, last = 0;
  for (int it = 0; it < 20; ++it) {
    const auto rep = train_step(model, frames, {2, 2, 2, 2}, {0, 0, 1, 1}, opt, 0.2);
    if (it == 0) first = rep.total;
    last = rep.total;
  }
  EXPECT_LT(last, first);
}
