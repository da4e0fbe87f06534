#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "wsol/rng.hpp"
#include "wsol/tensor.hpp"

using namespace wsol;

namespace {

Tensord random_tensor(Shape shape, RngStream& rng) {
  Tensord t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

}  // namespace

TEST(Conv2d, IdentityKernelReturnsInput) {
  RngStream rng(1, 0, 0, StreamDomain::test);
  const Tensord x = random_tensor({1, 1, 4, 4}, rng);
  const Tensord w({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(conv2d(x, w, 1, 0), x);
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  RngStream rng(2, 0, 0, StreamDomain::test);
  const Tensord w = random_tensor({4, 3, 3, 3}, rng);
  const Tensord y = conv2d(Tensord({2, 3, 5, 5}), w, 1, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 5}));
  EXPECT_EQ(y.flat().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Conv2d, HandSummedTwoByTwo) {
  const Tensord x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensord w({1, 1, 2, 2}, 1.0);
  EXPECT_EQ(conv2d(x, w, 1, 0), Tensord({1, 1, 2, 2}, {12, 16, 24, 28}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(Tensord({1, 2, 4, 4}), Tensord({1, 3, 3, 3}), 1, 1), InvalidArgument);
}

TEST(Conv2d, MatchesDirectLoops) {
  struct Case {
    Shape x, w;
    int stride, pad;
  };
  const Case cases[] = {{{2, 3, 7, 6}, {4, 3, 3, 3}, 1, 1},
                        {{1, 2, 8, 8}, {3, 2, 3, 3}, 2, 1},
                        {{2, 4, 6, 6}, {5, 4, 1, 1}, 2, 0},
                        {{1, 1, 5, 5}, {2, 1, 2, 3}, 1, 2}};
  RngStream rng(3, 0, 0, StreamDomain::test);
  for (const Case& c : cases) {
    const Tensord x = random_tensor(c.x, rng), w = random_tensor(c.w, rng);
    const Tensord got = conv2d(x, w, c.stride, c.pad);
    const Tensord want = oracle::conv2d(x, w, c.stride, c.pad);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LE((got.flat() - want.flat()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv2d, IsLinear) {
  RngStream rng(4, 0, 0, StreamDomain::test);
  const Tensord a = random_tensor({2, 3, 6, 6}, rng), b = random_tensor({2, 3, 6, 6}, rng);
  const Tensord w = random_tensor({4, 3, 3, 3}, rng);
  Tensord mix = a;
  mix.flat() = 1.7 * a.flat() - 0.3 * b.flat();
  const Tensord lhs = conv2d(mix, w, 2, 1);
  Tensord rhs = conv2d(a, w, 2, 1);
  rhs.flat() = 1.7 * rhs.flat() - 0.3 * conv2d(b, w, 2, 1).flat();
  EXPECT_LE((lhs.flat() - rhs.flat()).cwiseAbs().maxCoeff(), 1e-5 * rhs.flat().cwiseAbs().maxCoeff());
}

TEST(BatchNorm, EvalWithUnitStatsIsNearIdentity) {
  RngStream rng(5, 0, 0, StreamDomain::test);
  const Tensord x = random_tensor({2, 3, 4, 4}, rng);
  BatchNormParams<double> p(3);
  const Tensord y = batch_norm_eval(x, p);
  EXPECT_LE((y.flat() - x.flat() / std::sqrt(1.0 + 1e-5)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((y.flat() - x.flat()).cwiseAbs().maxCoeff(), 1e-5 * x.flat().cwiseAbs().maxCoeff());
}

TEST(BatchNorm, HandNormalizedPair) {
  const Tensord x({2, 1}, {1.0, 3.0});
  BatchNormParams<double> p(1);
  p.gamma[0] = 2.0;
  p.beta[0] = 1.0;
  const Tensord y = batch_norm_train(x, p);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], 1.0 - 2.0 * scale, 1e-15);
  EXPECT_NEAR(y[1], 1.0 + 2.0 * scale, 1e-15);
  EXPECT_NEAR(y[0], -1.0, 1e-4);
  EXPECT_NEAR(y[1], 3.0, 1e-4);
}

TEST(BatchNorm, RunningStatsUseUnbiasedVariance) {
  const Tensord x({2, 1}, {1.0, 3.0});
  BatchNormParams<double> p(1);
  batch_norm_train(x, p);
  EXPECT_DOUBLE_EQ(p.running_mean[0], 0.1 * 2.0);
  EXPECT_DOUBLE_EQ(p.running_var[0], 0.9 * 1.0 + 0.1 * 2.0);
}

TEST(BatchNorm, SingleValuePerChannelIsDegenerate) {
  BatchNormParams<double> p(2);
  EXPECT_THROW(batch_norm_train(Tensord({1, 2, 1, 1}), p), DegenerateBatch);
  EXPECT_THROW(batch_norm_train(Tensord({1, 2}), p), DegenerateBatch);
}

TEST(Elementwise, ReluGapLinear) {
  EXPECT_EQ(relu(Tensord({3}, {-1, 0, 2})), Tensord({3}, {0, 0, 2}));
  const Tensord g = gap(Tensord({2, 3, 5, 7}, 5.0));
  EXPECT_EQ(g.shape(), (Shape{2, 3}));
  for (Index i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 5.0);
  const Tensord y = linear(Tensord({1, 2}, {1, 2}), Tensord({2, 2}, {1, 0, 0, 1}), Tensord({2}, {1, 1}));
  EXPECT_EQ(y, Tensord({1, 2}, {2, 3}));
  EXPECT_THROW(linear(Tensord({1, 3}), Tensord({2, 2}), Tensord({2})), InvalidArgument);
}

TEST(Elementwise, GapOfReluOnNonnegativeIsGap) {
  RngStream rng(6, 0, 0, StreamDomain::test);
  Tensord x = random_tensor({2, 3, 4, 4}, rng);
  x.flat() = x.flat().cwiseAbs();
  EXPECT_EQ(gap(relu(x)), gap(x));
}

TEST(SoftmaxCrossEntropy, EqualLogits) {
  const int labels[] = {2};
  const auto r = softmax_cross_entropy(Tensord({1, 4}, 0.7), labels);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(r.probs[i], 0.25, 1e-15);
}

TEST(SoftmaxCrossEntropy, LargeLogitsStayFinite) {
  const int labels[] = {0};
  const auto r = softmax_cross_entropy(Tensord({1, 2}, {1000.0, 0.0}), labels);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-300);
}

TEST(SoftmaxCrossEntropy, ClosedForm) {
  // -log softmax([1,2])[k]: ln(1+e) for k = 0, ln(1+e) - 1 = 0.3133 for k = 1.
  const Tensord logits({1, 2}, {1.0, 2.0});
  const int first[] = {0}, second[] = {1};
  EXPECT_NEAR(softmax_cross_entropy(logits, first).loss, std::log1p(std::exp(1.0)), 1e-15);
  const double loss = softmax_cross_entropy(logits, second).loss;
  EXPECT_NEAR(loss, std::log1p(std::exp(1.0)) - 1.0, 1e-15);
  EXPECT_NEAR(loss, 0.3133, 5e-5);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRangeThrows) {
  const int bad[] = {2};
  EXPECT_THROW(softmax_cross_entropy(Tensord({1, 2}), bad), InvalidArgument);
  const int neg[] = {-1};
  EXPECT_THROW(softmax_cross_entropy(Tensord({1, 2}), neg), InvalidArgument);
}

TEST(SoftmaxCrossEntropy, BiasGradientIsMeanResidual) {
  RngStream rng(7, 0, 0, StreamDomain::test);
  const Tensord logits = random_tensor({3, 4}, rng);
  const int labels[] = {1, 3, 0};
  const auto r = softmax_cross_entropy(logits, labels);
  const Tensord d = softmax_cross_entropy_backward(r.probs, labels);
  const auto grads = linear_backward(Tensord({3, 2}, 1.0), Tensord({2, 4}), d);
  for (Index c = 0; c < 4; ++c) {
    double want = 0.0;
    for (Index n = 0; n < 3; ++n) want += r.probs(n, c) - (labels[n] == c ? 1.0 : 0.0);
    EXPECT_NEAR(grads.bias[c], want / 3.0, 1e-15);
  }
}

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensord({2, 0}), InvalidArgument);
  EXPECT_THROW(Tensord({2}, {1.0, 2.0, 3.0}), InvalidArgument);
  EXPECT_THROW(Tensord({2, 3}).reshaped({4}), InvalidArgument);
  EXPECT_THROW(Tensord({2}) + Tensord({3}), InvalidArgument);
}
