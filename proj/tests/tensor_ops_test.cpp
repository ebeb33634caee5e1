#include <cmath>

#include <gtest/gtest.h>

#include "ctiunet/errors.hpp"
#include "ctiunet/grad_check.hpp"
#include "ctiunet/ops.hpp"
#include "test_util.hpp"

namespace ctiunet {
namespace {

using testing::random_tensor;

// Forward-only helper: runs op on constants and returns the value.
template <typename F>
Tensor4 eval(F&& op) {
  Tape tape(false);
  return tape.value(op(tape));
}

TEST(Tensor4Test, CountMatchesShape) {
  Tensor4 t({2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
}

TEST(Tensor4Test, RejectsWrongValueCount) {
  EXPECT_THROW(Tensor4({1, 1, 2, 2}, std::vector<double>{1, 2, 3}), ConfigError);
}

TEST(Conv2dTest, OneByOneKernelScales) {
  const Tensor4 out = eval([](Tape& t) {
    return conv2d(t.constant(Tensor4({1, 1, 3, 3}, 1.0)), t.constant(Tensor4({1, 1, 1, 1}, 2.0)),
                  t.constant(Tensor4({1, 1, 1, 1}, 0.0)));
  });
  EXPECT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 2.0);
}

TEST(Conv2dTest, ValidPaddingSumsWindow) {
  const Tensor4 out = eval([](Tape& t) {
    return conv2d(t.constant(Tensor4({1, 1, 2, 2}, {1, 2, 3, 4})),
                  t.constant(Tensor4({1, 1, 2, 2}, 1.0)), std::nullopt, {1, Padding::kValid});
  });
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], 10.0);
}

TEST(Conv2dTest, StridedSameShape) {
  const Tensor4 out = eval([](Tape& t) {
    return conv2d(t.constant(random_tensor({2, 3, 8, 8}, 1)),
                  t.constant(random_tensor({4, 3, 3, 3}, 2)), std::nullopt, {2, Padding::kSame});
  });
  EXPECT_EQ(out.shape(), (Shape{2, 4, 4, 4}));
}

// Direct nested-loop convolution with zero padding.
Tensor4 naive_conv(const Tensor4& x, const Tensor4& w, std::size_t stride, std::size_t pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor4 out({xs.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) ||
                    ix >= static_cast<long>(xs.w))
                  continue;
                acc += x.at(n, c, iy, ix) * w.at(o, c, ky, kx);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

TEST(Conv2dTest, MatchesNestedLoops) {
  const Tensor4 x = random_tensor({2, 3, 7, 6}, 3);
  const Tensor4 w = random_tensor({5, 3, 3, 3}, 4);
  for (std::size_t stride : {1, 2}) {
    const Tensor4 got = eval([&](Tape& t) {
      return conv2d(t.constant(x), t.constant(w), std::nullopt, {stride, Padding::kSame});
    });
    EXPECT_LT(max_abs_diff(got, naive_conv(x, w, stride, 1)), 1e-12) << "stride " << stride;
  }
}

TEST(Conv2dTest, Linearity) {
  const Tensor4 x = random_tensor({1, 2, 6, 6}, 5);
  const Tensor4 w = random_tensor({3, 2, 3, 3}, 6);
  Tensor4 x3 = x;
  for (std::size_t i = 0; i < x3.size(); ++i) x3[i] *= 3.0;
  const Tensor4 a = eval([&](Tape& t) { return conv2d(t.constant(x), t.constant(w), std::nullopt); });
  const Tensor4 b = eval([&](Tape& t) { return conv2d(t.constant(x3), t.constant(w), std::nullopt); });
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 3.0 * a[i], 1e-6 * std::abs(3 * a[i]) + 1e-15);
}

TEST(Conv2dTest, ChannelMismatchIsConfigError) {
  EXPECT_THROW(eval([](Tape& t) {
                 return conv2d(t.constant(Tensor4({1, 2, 4, 4})), t.constant(Tensor4({1, 3, 3, 3})),
                               std::nullopt);
               }),
               ConfigError);
}

TEST(MaxPoolTest, PicksMaximum) {
  const Tensor4 out =
      eval([](Tape& t) { return maxpool2(t.constant(Tensor4({1, 1, 2, 2}, {1, 2, 3, 4}))); });
  EXPECT_EQ(out[0], 4.0);
  const Tensor4 c = eval([](Tape& t) { return maxpool2(t.constant(Tensor4({1, 1, 4, 4}, 7.0))); });
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i], 7.0);
}

TEST(MaxPoolTest, RoutesGradientToOneArgmaxPerWindow) {
  Parameter p("x", random_tensor({1, 1, 4, 4}, 8));
  Tape tape;
  const Value y = maxpool2(tape.parameter(p));
  tape.backward(sum_of_squares(y));
  // d/dy of sum(y^2) is 2y; rescale to a ones-gradient by dividing.
  for (std::size_t wy = 0; wy < 2; ++wy)
    for (std::size_t wx = 0; wx < 2; ++wx) {
      int hits = 0;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          if (p.grad.at(0, 0, 2 * wy + dy, 2 * wx + dx) != 0.0) ++hits;
      EXPECT_EQ(hits, 1);
    }
}

TEST(MaxPoolTest, TiesGoToFirstElement) {
  Parameter p("x", Tensor4({1, 1, 2, 2}, 1.0));
  Tape tape;
  tape.backward(mean(maxpool2(tape.parameter(p))));
  EXPECT_EQ(p.grad[0], 1.0);
  EXPECT_EQ(p.grad[1] + p.grad[2] + p.grad[3], 0.0);
}

TEST(MaxPoolTest, OddExtentIsConfigError) {
  EXPECT_THROW(eval([](Tape& t) { return maxpool2(t.constant(Tensor4({1, 1, 3, 4}))); }),
               ConfigError);
}

TEST(UpsampleTest, ReplicatesAndSumsGradient) {
  const Tensor4 out =
      eval([](Tape& t) { return upsample_nearest2(t.constant(Tensor4({1, 1, 1, 1}, 5.0))); });
  EXPECT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], 5.0);

  Parameter p("x", random_tensor({1, 2, 3, 3}, 9));
  Tape tape;
  const Value up = upsample_nearest2(tape.parameter(p));
  // Top-left sampling recovers the input.
  const Tensor4& u = tape.value(up);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(u.at(0, c, 2 * y, 2 * x), p.value.at(0, c, y, x));
  // mean() seeds 1/N per output element; scale back to a ones-gradient.
  tape.backward(mean(up));
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < p.grad.size(); ++i) EXPECT_DOUBLE_EQ(p.grad[i] * n, 4.0);
}

TEST(ConcatTest, ShapesAndSplitGradient) {
  Parameter a("a", random_tensor({2, 3, 8, 8}, 10));
  Parameter b("b", random_tensor({2, 5, 8, 8}, 11));
  Tape tape;
  const Value c = concat_channels(tape.parameter(a), tape.parameter(b));
  EXPECT_EQ(c.shape(), (Shape{2, 8, 8, 8}));
  EXPECT_EQ(tape.value(c).slice_channels(0, 3), a.value);
  EXPECT_EQ(tape.value(c).slice_channels(3, 5), b.value);
  tape.backward(mean(c));
  const double n = static_cast<double>(tape.value(c).size());
  for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_DOUBLE_EQ(a.grad[i] * n, 1.0);
  for (std::size_t i = 0; i < b.grad.size(); ++i) EXPECT_DOUBLE_EQ(b.grad[i] * n, 1.0);
}

TEST(ConcatTest, SpatialMismatchIsConfigError) {
  EXPECT_THROW(eval([](Tape& t) {
                 return concat_channels(t.constant(Tensor4({1, 1, 4, 4})),
                                        t.constant(Tensor4({1, 1, 4, 2})));
               }),
               ConfigError);
}

Tensor4 norm_eval(const Tensor4& x, double eps) {
  const std::size_t c = x.shape().c;
  return eval([&](Tape& t) {
    return instance_norm(t.constant(x), t.constant(Tensor4({1, c, 1, 1}, 1.0)),
                         t.constant(Tensor4({1, c, 1, 1}, 0.0)), eps);
  });
}

TEST(InstanceNormTest, ConstantPlaneGivesZeros) {
  const Tensor4 out = norm_eval(Tensor4({1, 1, 3, 3}, 4.0), 1e-5);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 0.0);
}

TEST(InstanceNormTest, TwoValuePlane) {
  const Tensor4 out = norm_eval(Tensor4({1, 1, 1, 2}, {1, 3}), 1e-14);
  EXPECT_NEAR(out[0], -1.0, 1e-12);
  EXPECT_NEAR(out[1], 1.0, 1e-12);
}

TEST(InstanceNormTest, UnitStatistics) {
  const Tensor4 out = norm_eval(random_tensor({2, 3, 5, 7}, 12, -3, 5), 1e-5);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (double x : out.plane(n, c)) m += x;
      m /= 35.0;
      for (double x : out.plane(n, c)) v += (x - m) * (x - m);
      v /= 35.0;
      EXPECT_NEAR(m, 0.0, 1e-5);
      EXPECT_NEAR(v, 1.0, 1e-5);
    }
}

TEST(ActivationTest, ReluAndSigmoid) {
  const Tensor4 r =
      eval([](Tape& t) { return relu(t.constant(Tensor4({1, 1, 1, 3}, {-1, 0, 2}))); });
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 2.0);
  EXPECT_EQ(stable_sigmoid(0.0), 0.5);
  // 1/(1+e^40) and 1 - that, evaluated without cancellation.
  const double tiny = std::exp(-40.0) / (1.0 + std::exp(-40.0));
  EXPECT_GT(stable_sigmoid(-40.0), 0.0);
  EXPECT_NEAR(stable_sigmoid(-40.0) / tiny, 1.0, 1e-14);
  // 1 - 4.2e-18 is below half an ulp of 1, so the correctly rounded value is 1.
  EXPECT_EQ(stable_sigmoid(40.0), 1.0);
  EXPECT_TRUE(std::isfinite(stable_sigmoid(-1000.0)));
  EXPECT_TRUE(std::isfinite(stable_sigmoid(1000.0)));
}

TEST(ActivationTest, ReluSubgradientAtZeroIsZero) {
  Parameter p("x", Tensor4({1, 1, 1, 3}, {-1, 0, 2}));
  Tape tape;
  tape.backward(mean(relu(tape.parameter(p))));
  EXPECT_EQ(p.grad[0], 0.0);
  EXPECT_EQ(p.grad[1], 0.0);
  EXPECT_DOUBLE_EQ(p.grad[2], 1.0 / 3.0);
}

// Chains every op. A bias before instance_norm has an identically zero
// gradient and sum-of-squares of a normalized plane is nearly constant, so the
// chain ends in a random 1x1 projection to keep every gradient well scaled.
TEST(OpsGradTest, EveryOpPassesAtTightTolerance) {
  GradCheckOptions opt;
  opt.tolerance = 1e-4;
  Parameter x("x", random_tensor({2, 2, 8, 6}, 13));
  Parameter w("w", random_tensor({3, 2, 3, 3}, 14));
  Parameter g("g", random_tensor({1, 3, 1, 1}, 16));
  Parameter s("s", random_tensor({1, 3, 1, 1}, 17));
  Parameter pw("pw", random_tensor({2, 6, 1, 1}, 18));
  Parameter pb("pb", random_tensor({1, 2, 1, 1}, 19));
  const auto rep = grad_check(
      [&](Tape& t) {
        Value h = conv2d(t.parameter(x), t.parameter(w), std::nullopt);
        h = instance_norm(h, t.parameter(g), t.parameter(s));
        h = upsample_nearest2(maxpool2(relu(h)));
        h = concat_channels(h, sigmoid(h));
        return sum_of_squares(conv2d(h, t.parameter(pw), t.parameter(pb)));
      },
      {&x, &w, &g, &s, &pw, &pb}, opt);
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
}

TEST(ForwardTest, DeterministicAndFinite) {
  const Tensor4 x = random_tensor({1, 2, 8, 8}, 18, -50, 50);
  const Tensor4 w = random_tensor({2, 2, 3, 3}, 19);
  auto f = [&](Tape& t) { return sigmoid(relu(conv2d(t.constant(x), t.constant(w), std::nullopt))); };
  const Tensor4 a = eval(f);
  const Tensor4 b = eval(f);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.all_finite());
}

}  // namespace
}  // namespace ctiunet
