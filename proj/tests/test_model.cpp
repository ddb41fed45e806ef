#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "negmine/grad_check.hpp"
#include "negmine/loss.hpp"
#include "negmine/network.hpp"
#include "negmine/random.hpp"

using namespace negmine;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(s);
  for (auto& v : t.values()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

Tensor random_targets(Shape s, std::mt19937_64& rng, double rate) {
  Tensor t(s);
  for (auto& v : t.values()) v = uniform01(rng) < rate ? 1.0 : 0.0;
  return t;
}

Tensor sigmoid_of(const Tensor& z) { return activation(z, Activation::sigmoid); }

double plain_bce(const Tensor& p, const Tensor& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
  }
  return s / static_cast<double>(p.size());
}

NetworkSpec small_spec() {
  NetworkSpec s;
  s.input_size = 8;
  s.depth = 2;
  s.base_channels = 4;
  s.inception_levels = {2};
  return s;
}

}  // namespace

TEST(NetworkSpec, Validation) {
  NetworkSpec s;
  EXPECT_NO_THROW(s.validate());
  s.input_size = 60;  // not divisible by 2^depth
  EXPECT_THROW(s.validate(), SpecError);
  s = {};
  s.inception_levels = {4};
  EXPECT_THROW(s.validate(), SpecError);
  s = {};
  s.depth = 0;
  EXPECT_THROW(s.validate(), SpecError);
}

TEST(Network, DefaultParameterCount) {
  const ParameterSet p = build_network(NetworkSpec{}, 1);
  EXPECT_EQ(p.parameter_count(), 25033u);
  std::size_t from_plan = 0;
  for (const auto& d : layer_plan(NetworkSpec{})) {
    from_plan += static_cast<std::size_t>(d.out_channels) * d.in_channels * d.kernel * d.kernel +
                 d.out_channels;
  }
  EXPECT_EQ(from_plan, p.parameter_count());
}

TEST(Network, InitializationDeterministicAndScaled) {
  const ParameterSet a = build_network(NetworkSpec{}, 5);
  EXPECT_EQ(a, build_network(NetworkSpec{}, 5));
  EXPECT_NE(a, build_network(NetworkSpec{}, 6));
  for (const auto& d : layer_plan(NetworkSpec{})) {
    const Layer& l = a.layer(d.id);
    for (double b : l.bias) EXPECT_EQ(b, 0.0);
    if (!d.relu) continue;
    double ss = 0;
    for (double w : l.weights.values()) ss += w * w;
    const double var = ss / static_cast<double>(l.weights.size());
    const double he = 2.0 / (d.in_channels * d.kernel * d.kernel);
    if (l.weights.size() >= 500) EXPECT_NEAR(var / he, 1.0, 0.35) << d.id;
  }
}

TEST(Network, ForwardShapeAndRange) {
  const ParameterSet p = build_network(NetworkSpec{}, 2);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 1, 64, 64}, rng, 0.0, 1.0);
  const Tensor y = forward(p, x);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 64, 64}));
  for (double v : y.values()) {
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
  EXPECT_EQ(forward(p, x), y);
}

TEST(Network, BatchPermutationEquivariant) {
  const ParameterSet p = build_network(small_spec(), 4);
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
  const Tensor b = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
  auto cat = [](const Tensor& u, const Tensor& v) {
    std::vector<double> d(u.values());
    d.insert(d.end(), v.values().begin(), v.values().end());
    return Tensor(Shape{2, 1, 8, 8}, d);
  };
  const Tensor ab = forward(p, cat(a, b)), ba = forward(p, cat(b, a));
  for (int i = 0; i < 64; ++i) {
    EXPECT_EQ(ab[i], ba[64 + i]);
    EXPECT_EQ(ab[64 + i], ba[i]);
  }
}

TEST(Network, WrongInputSizeThrows) {
  const ParameterSet p = build_network(small_spec(), 1);
  EXPECT_THROW(forward(p, Tensor(Shape{1, 1, 16, 16})), ShapeError);
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  const ParameterSet p = build_network(small_spec(), 7);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
  const Tensor wts = random_tensor({2, 1, 8, 8}, rng, -1.0, 1.0);
  // Input gradient through every layer.
  auto objective = [&](const Tensor& t) {
    const Tensor z = forward_train(p, t).logits;
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += wts[i] * z[i];
    return s;
  };
  auto gradient = [&](const Tensor& t) {
    Tensor gi;
    backward(p, forward_train(p, t), wts, &gi);
    return gi;
  };
  const auto r = grad_check(objective, gradient, x, 1e-4);
  EXPECT_TRUE(r.passed) << r.summary();

  // Parameter gradients of every layer.
  const ParameterSet g = backward(p, forward_train(p, x), wts);
  for (const auto& id : p.layer_ids()) {
    auto obj = [&](const Tensor& w) {
      ParameterSet q = p;
      q.layer(id).weights = w;
      const Tensor z = forward_train(q, x).logits;
      double s = 0;
      for (std::size_t i = 0; i < z.size(); ++i) s += wts[i] * z[i];
      return s;
    };
    const auto rl = grad_check(obj, [&](const Tensor&) { return g.layer(id).weights; },
                               p.layer(id).weights, 1e-4);
    EXPECT_TRUE(rl.passed) << id << ": " << rl.summary();
  }
}

TEST(ClassBalancedLoss, BalancedBatchEqualsPlainCrossEntropy) {
  std::mt19937_64 rng(20);
  const Tensor p = random_tensor({1, 1, 2, 2}, rng, 0.05, 0.95);
  const Tensor y(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  const LossResult r = class_balanced_loss(p, y);
  EXPECT_DOUBLE_EQ(r.positive_weight, 1.0);
  EXPECT_DOUBLE_EQ(r.negative_weight, 1.0);
  EXPECT_NEAR(r.loss, plain_bce(p, y), 1e-15);
}

TEST(ClassBalancedLoss, WeightsFromFrequencies) {
  const Tensor p(Shape{1, 1, 1, 4}, 0.5);
  const Tensor y(Shape{1, 1, 1, 4}, std::vector<double>{1, 0, 0, 0});
  const LossResult r = class_balanced_loss(p, y);
  EXPECT_DOUBLE_EQ(r.positive_weight, 2.0);
  EXPECT_DOUBLE_EQ(r.negative_weight, 4.0 / 6.0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);  // weights sum to N
}

TEST(ClassBalancedLoss, AbsentClassFallsBackToUnitWeight) {
  const Tensor p(Shape{1, 1, 2, 2}, 0.2);
  const Tensor y(Shape{1, 1, 2, 2}, 0.0);
  const LossResult r = class_balanced_loss(p, y);
  EXPECT_DOUBLE_EQ(r.positive_weight, 1.0);  // absent
  EXPECT_DOUBLE_EQ(r.negative_weight, 0.5);  // N / (2 N_neg)
  EXPECT_NEAR(r.loss, -0.5 * std::log(0.8), 1e-15);
}

TEST(ClassBalancedLoss, ClipsSaturatedProbabilities) {
  const Tensor p(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor y(Shape{1, 1, 1, 2}, std::vector<double>{1, 0});
  const LossResult r = class_balanced_loss(p, y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, -std::log(kProbabilityClip), 1e-9);
}

TEST(ClassBalancedLoss, ShapeMismatchThrows) {
  EXPECT_THROW(class_balanced_loss(Tensor(Shape{1, 1, 2, 2}, 0.5), Tensor(Shape{1, 1, 2, 3})),
               ShapeError);
}

TEST(ClassBalancedLoss, MonotoneInPositiveWeight) {
  // More negatives raise w_pos; a mispredicted positive then costs more in
  // total, the negatives being predicted perfectly.
  auto loss_with_negatives = [](int negatives) {
    const int n = negatives + 1;
    std::vector<double> p(n, kProbabilityClip), y(n, 0.0);
    p[0] = 0.3;
    y[0] = 1.0;
    const auto r = class_balanced_loss(Tensor(Shape{1, 1, 1, n}, p), Tensor(Shape{1, 1, 1, n}, y));
    return r.loss * n;  // undo the 1/N normalization
  };
  EXPECT_LT(loss_with_negatives(1), loss_with_negatives(3));
  EXPECT_LT(loss_with_negatives(3), loss_with_negatives(9));
}

class LossGradient : public ::testing::TestWithParam<int> {};

TEST_P(LossGradient, MatchesFiniteDifferencesInLogits) {
  std::mt19937_64 rng(500 + GetParam());
  const Tensor z = random_tensor({2, 1, 4, 4}, rng, -3.0, 3.0);
  const Tensor y = random_targets(z.shape(), rng, 0.2 + 0.03 * GetParam());
  const auto r = grad_check(
      [&](const Tensor& t) { return class_balanced_loss(sigmoid_of(t), y).loss; },
      [&](const Tensor& t) { return class_balanced_loss(sigmoid_of(t), y).grad_logits; }, z,
      1e-4);
  EXPECT_TRUE(r.passed) << r.summary();
}

INSTANTIATE_TEST_SUITE_P(TwentyInputs, LossGradient, ::testing::Range(0, 20));

TEST(MaskTargets, StacksMasks) {
  NoduleMask a(2, 2), b(2, 2);
  a.at(1, 0) = 1;
  b.at(0, 1) = 1;
  const Tensor t = mask_targets({&a, &b});
  EXPECT_EQ(t.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(t.values(), (std::vector<double>{0, 1, 0, 0, 0, 0, 1, 0}));
}

// Frozen from a hand tally of every convolution of the default network
// (64x64 input, base 8, depth 3, inception at levels 2 and 3).
TEST(Macs, DefaultNetwork) {
  const NetworkSpec spec;
  EXPECT_EQ(count_macs(spec, true), 10039296u);
  EXPECT_EQ(count_macs(spec, false), 15630336u);
  const auto inc = count_mac_breakdown(spec, true);
  const auto plain = count_mac_breakdown(spec, false);
  EXPECT_EQ(inc.decoder, plain.decoder);
  EXPECT_EQ(inc.bottleneck, plain.bottleneck);
  EXPECT_LE(static_cast<double>(inc.encoder), 0.8 * static_cast<double>(plain.encoder));
}

TEST(Macs, ConvFormula) {
  EXPECT_EQ(conv_macs(3, 4, 3, 10, 10), 3u * 4 * 9 * 100);
}
