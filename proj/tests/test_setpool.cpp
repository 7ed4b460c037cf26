#include <gtest/gtest.h>

#include "gaitset/grad_check.hpp"
#include "gaitset/setpool.hpp"
#include "oracles.hpp"

using namespace gaitset;
namespace gt = gaitset::testing;

namespace {

// shuffled copy of a frame set along axis 0
template <typename T>
BasicTensor<T> shuffled_frames(const BasicTensor<T>& frames, Rng& rng) {
  const int64_t n = frames.dim(0), block = frames.numel() / n;
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  Storage<T> s(frames.shape());
  for (int64_t i = 0; i < n; ++i)
    std::copy(frames.data().begin() + perm[static_cast<size_t>(i)] * block,
              frames.data().begin() + (perm[static_cast<size_t>(i)] + 1) * block,
              s.data.begin() + i * block);
  return BasicTensor<T>::leaf(std::move(s));
}

constexpr SpStrategy kAll[] = {SpStrategy::kMax,      SpStrategy::kMean,
                               SpStrategy::kMedian,   SpStrategy::kJointSum,
                               SpStrategy::kJointConv, SpStrategy::kAttention};

}  // namespace

TEST(Strategy, ParseRoundTrip) {
  for (SpStrategy s : kAll) EXPECT_EQ(parse_sp_strategy(sp_strategy_name(s)), s);
  EXPECT_THROW(parse_sp_strategy("meanish"), ConfigError);
}

TEST(MaxPool, KnownValues) {
  auto frames = Tensor::from_data({3, 1, 1, 2}, {1.f, 5.f, 4.f, 2.f, 3.f, 3.f});
  auto z = set_pool(frames, SpStrategy::kMax);
  ASSERT_EQ(z.shape(), (Shape{1, 1, 2}));
  EXPECT_FLOAT_EQ(z.data()[0], 4.f);
  EXPECT_FLOAT_EQ(z.data()[1], 5.f);
}

TEST(JointSum, HandValues) {
  auto frames = Tensor::from_data({2, 1, 1, 2}, {2.f, 0.f, 0.f, 2.f});
  auto z = set_pool(frames, SpStrategy::kJointSum);
  // max [2,2] + mean [1,1] + even-n median (midpoint) [1,1]
  EXPECT_FLOAT_EQ(z.data()[0], 4.f);
  EXPECT_FLOAT_EQ(z.data()[1], 4.f);
}

TEST(JointConv, SumCombinerEqualsJointSum) {
  const int64_t c = 3;
  Rng rng(50);
  auto frames = Tensor::leaf(gt::random_storage<float>({5, c, 4, 3}, rng));
  Storage<float> w({c, 3 * c, 1, 1});
  for (int64_t o = 0; o < c; ++o)
    for (int64_t g = 0; g < 3; ++g) w.data[o * 3 * c + g * c + o] = 1.f;
  auto z = joint_conv_pool(frames, Tensor::leaf(std::move(w)));
  auto ref = set_pool(frames, SpStrategy::kJointSum);
  EXPECT_LT(gt::max_rel_diff(z.storage(), ref.storage()), 1e-6);
}

TEST(JointConv, ProjectionCombinerEqualsMax) {
  const int64_t c = 2;
  Rng rng(51);
  auto frames = Tensor::leaf(gt::random_storage<float>({4, c, 3, 3}, rng));
  Storage<float> w({c, 3 * c, 1, 1});
  for (int64_t o = 0; o < c; ++o) w.data[o * 3 * c + o] = 1.f;  // picks the max block
  auto z = joint_conv_pool(frames, Tensor::leaf(std::move(w)));
  auto ref = set_pool(frames, SpStrategy::kMax);
  EXPECT_LT(gt::max_rel_diff(z.storage(), ref.storage()), 1e-6);
}

TEST(JointConv, MatchesTwoStepOracle) {
  const int64_t c = 3, h = 4, w = 5;
  Rng rng(52);
  auto frames = DTensor::leaf(gt::random_storage<double>({6, c, h, w}, rng));
  auto comb = DTensor::leaf(gt::random_storage<double>({c, 3 * c, 1, 1}, rng));
  auto z = joint_conv_pool(frames, comb);
  // oracle: stack the three naive statistics, then a naive 1x1 convolution
  Storage<double> cat({1, 3 * c, h, w});
  auto mx = gt::naive_max0(frames.storage());
  auto mn = gt::naive_mean0(frames.storage());
  auto md = gt::naive_median0(frames.storage());
  std::copy(mx.data.begin(), mx.data.end(), cat.data.begin());
  std::copy(mn.data.begin(), mn.data.end(), cat.data.begin() + c * h * w);
  std::copy(md.data.begin(), md.data.end(), cat.data.begin() + 2 * c * h * w);
  auto ref = gt::naive_conv2d(cat, comb.storage(), 0, 0);
  ASSERT_EQ(z.numel(), ref.numel());
  for (int64_t i = 0; i < z.numel(); ++i) EXPECT_NEAR(z.data()[i], ref.data[i], 1e-9);
}

TEST(JointConv, ChannelMismatchThrows) {
  auto frames = Tensor::zeros({2, 3, 2, 2});
  EXPECT_THROW(joint_conv_pool(frames, Tensor::zeros({3, 6, 1, 1})), ShapeError);
}

TEST(Attention, ZeroParamsDegeneratesToMax) {
  const int64_t c = 3;
  Rng rng(53);
  auto frames = Tensor::leaf(gt::random_storage<float>({7, c, 4, 3}, rng));
  auto z = attention_pool(frames, Tensor::zeros({c, 4 * c, 1, 1}));
  auto ref = set_pool(frames, SpStrategy::kMax);
  for (int64_t i = 0; i < z.numel(); ++i) EXPECT_EQ(z.data()[i], ref.data()[i]);
}

TEST(Attention, SingletonSetKeepsShapeAndResidual) {
  const int64_t c = 2, h = 3, w = 2;
  Rng rng(54);
  auto frames = DTensor::leaf(gt::random_storage<double>({1, c, h, w}, rng));
  auto weight = DTensor::leaf(gt::random_storage<double>({c, 4 * c, 1, 1}, rng));
  auto z = attention_pool(frames, weight);
  ASSERT_EQ(z.shape(), (Shape{c, h, w}));
  // n=1: all three statistics equal the frame, so the conv sees the frame
  // four times; output must be frame * att + frame
  Storage<double> cat({1, 4 * c, h, w});
  for (int g = 0; g < 4; ++g)
    std::copy(frames.data().begin(), frames.data().end(), cat.data.begin() + g * c * h * w);
  auto att = gt::naive_conv2d(cat, weight.storage(), 0, 0);
  for (int64_t i = 0; i < z.numel(); ++i)
    EXPECT_NEAR(z.data()[i], frames.data()[i] * att.data[i] + frames.data()[i], 1e-12);
}

TEST(Attention, TwentyShufflesInvariant) {
  const int64_t c = 2;
  Rng rng(55);
  auto frames = Tensor::leaf(gt::random_storage<float>({9, c, 3, 4}, rng));
  auto weight = Tensor::leaf(gt::random_storage<float>({c, 4 * c, 1, 1}, rng));
  auto base = attention_pool(frames, weight);
  for (int rep = 0; rep < 20; ++rep) {
    auto z = attention_pool(shuffled_frames(frames, rng), weight);
    EXPECT_LT(gt::max_rel_diff(z.storage(), base.storage()), 1e-6);
  }
}

TEST(AllStrategies, PermutationInvariance1000Draws) {
  Rng rng(56);
  for (int draw = 0; draw < 1000; ++draw) {
    const int64_t n = rng.uniform_int(1, 40);
    const int64_t c = rng.uniform_int(1, 3);
    const int64_t h = rng.uniform_int(1, 5);
    const int64_t w = rng.uniform_int(1, 5);
    auto frames = Tensor::leaf(gt::random_storage<float>({n, c, h, w}, rng));
    auto shuf = shuffled_frames(frames, rng);
    const SpStrategy strategy = kAll[draw % 6];
    ParameterStore store;
    register_set_pool_params(store, strategy, "sp", c, uint64_t(draw));
    auto a = set_pool(frames, strategy, &store, "sp");
    auto b = set_pool(shuf, strategy, &store, "sp");
    if (strategy == SpStrategy::kMax || strategy == SpStrategy::kMedian) {
      for (int64_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
    } else {
      ASSERT_LT(gt::max_rel_diff(a.storage(), b.storage()), 1e-6);
    }
  }
}

TEST(AllStrategies, MeanContainingStrategiesAreActuallyBitExact) {
  // stronger than the 1e-6 contract: the canonical set-mean makes every
  // strategy bitwise permutation invariant
  Rng rng(57);
  for (int draw = 0; draw < 60; ++draw) {
    const int64_t n = rng.uniform_int(2, 25);
    const int64_t c = rng.uniform_int(1, 3);
    auto frames = Tensor::leaf(gt::random_storage<float>({n, c, 3, 3}, rng));
    auto shuf = shuffled_frames(frames, rng);
    const SpStrategy strategy = kAll[draw % 6];
    ParameterStore store;
    register_set_pool_params(store, strategy, "sp", c, uint64_t(draw));
    auto a = set_pool(frames, strategy, &store, "sp");
    auto b = set_pool(shuf, strategy, &store, "sp");
    for (int64_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
  }
}

TEST(AllStrategies, CardinalityFreedom) {
  Rng rng(58);
  const int64_t c = 2, h = 4, w = 3;
  ParameterStore store;
  for (SpStrategy s : kAll) register_set_pool_params(store, s, sp_strategy_name(s), c, 9);
  for (int64_t n : {int64_t(1), int64_t(2), int64_t(7), int64_t(30), int64_t(100)}) {
    auto frames = Tensor::leaf(gt::random_storage<float>({n, c, h, w}, rng));
    for (SpStrategy s : kAll) {
      auto z = set_pool(frames, s, &store, sp_strategy_name(s));
      EXPECT_EQ(z.shape(), (Shape{c, h, w})) << sp_strategy_name(s) << " n=" << n;
    }
  }
}

TEST(AllStrategies, MaxDominatesMeanOnNonnegativeInputs) {
  Rng rng(59);
  auto frames = Tensor::leaf(gt::random_storage<float>({11, 2, 3, 3}, rng, 0.0, 2.0));
  auto mx = set_pool(frames, SpStrategy::kMax);
  auto mn = set_pool(frames, SpStrategy::kMean);
  for (int64_t i = 0; i < mx.numel(); ++i) EXPECT_GE(mx.data()[i], mn.data()[i]);
}

TEST(AllStrategies, RejectsNonFrameSetRank) {
  auto bad = Tensor::zeros({3, 4, 4});
  EXPECT_THROW(set_pool(bad, SpStrategy::kMax), ShapeError);
}

TEST(AllStrategies, TrainableStrategiesNeedStore) {
  auto frames = Tensor::zeros({2, 2, 2, 2});
  EXPECT_THROW(set_pool(frames, SpStrategy::kJointConv), ConfigError);
  EXPECT_THROW(set_pool(frames, SpStrategy::kAttention), ConfigError);
}

TEST(GradChecks, JointConvCombiner) {
  const int64_t c = 2;
  Rng rng(60);
  auto frames = DTensor::leaf(gt::random_storage<double>({4, c, 3, 3}, rng), true);
  auto comb = DTensor::leaf(gt::random_storage<double>({c, 3 * c, 1, 1}, rng), true);
  auto rep = grad_check<double>([&] { return mean_all(joint_conv_pool(frames, comb)); },
                                {frames, comb});
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
}

TEST(GradChecks, AttentionWeight) {
  const int64_t c = 2;
  Rng rng(61);
  auto frames = DTensor::leaf(gt::random_storage<double>({3, c, 2, 3}, rng), true);
  auto weight = DTensor::leaf(gt::random_storage<double>({c, 4 * c, 1, 1}, rng), true);
  auto rep = grad_check<double>([&] { return mean_all(attention_pool(frames, weight)); },
                                {frames, weight});
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
}

TEST(Params, RegistrationMatchesStrategy) {
  ParameterStore store;
  register_set_pool_params(store, SpStrategy::kMax, "a", 4, 1);
  EXPECT_EQ(store.size(), 0u);
  register_set_pool_params(store, SpStrategy::kJointConv, "b", 4, 1);
  EXPECT_EQ(store.get("b.joint.w").shape(), (Shape{4, 12, 1, 1}));
  register_set_pool_params(store, SpStrategy::kAttention, "c", 4, 1);
  EXPECT_EQ(store.get("c.attn.w").shape(), (Shape{4, 16, 1, 1}));
}
