#include <gtest/gtest.h>

#include "ctiunet/errors.hpp"
#include "ctiunet/grad_check.hpp"
#include "ctiunet/ops.hpp"
#include "test_util.hpp"

namespace ctiunet {
namespace {

TEST(GradCheckTest, QuadraticIsExact) {
  Parameter p("p", testing::random_tensor({1, 1, 3, 3}, 1));
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  const auto rep = grad_check([&](Tape& t) { return sum_of_squares(t.parameter(p)); }, {&p}, opt);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.entries.size(), 9u);
  for (const auto& e : rep.entries) EXPECT_NEAR(e.analytic, 2 * p.value[e.index], 1e-12);
}

TEST(GradCheckTest, ConvReluMean) {
  Parameter x("x", testing::random_tensor({1, 2, 5, 5}, 2));
  Parameter w("w", testing::random_tensor({2, 2, 3, 3}, 3));
  const auto rep = grad_check(
      [&](Tape& t) { return mean(relu(conv2d(t.parameter(x), t.parameter(w), std::nullopt))); },
      {&x, &w});
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
  EXPECT_LE(rep.max_relative_error, 1e-4);
}

// An op whose recorded backward is deliberately off by a factor of two.
Value wrong_square_sum(Value in) {
  Tape& tape = *in.tape;
  double s = 0.0;
  for (double v : tape.value(in).data()) s += v * v;
  const Tensor4 x = tape.value(in);
  return tape.record(Tensor4({1, 1, 1, 1}, s), {in},
                     [x](const Tensor4& g, std::vector<Tensor4*>& gi) {
                       if (!gi[0]) return;
                       for (std::size_t i = 0; i < x.size(); ++i) (*gi[0])[i] += g[0] * 4 * x[i];
                     });
}

TEST(GradCheckTest, DetectsWrongBackward) {
  Parameter p("p", testing::random_tensor({1, 1, 2, 2}, 4));
  const auto rep = grad_check([&](Tape& t) { return wrong_square_sum(t.parameter(p)); }, {&p});
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheckTest, NonDeterministicObjectiveIsHarnessError) {
  Parameter p("p", Tensor4({1, 1, 1, 1}, 1.0));
  int calls = 0;
  EXPECT_THROW(grad_check(
                   [&](Tape& t) {
                     ++calls;
                     return mean(t.constant(Tensor4({1, 1, 1, 1}, static_cast<double>(calls))));
                   },
                   {&p}),
               HarnessError);
}

TEST(GradCheckTest, SamplesCoordinates) {
  Parameter p("p", testing::random_tensor({1, 1, 10, 10}, 5));
  GradCheckOptions opt;
  opt.samples_per_parameter = 7;
  const auto rep = grad_check([&](Tape& t) { return sum_of_squares(t.parameter(p)); }, {&p}, opt);
  EXPECT_EQ(rep.entries.size(), 7u);
  EXPECT_TRUE(rep.passed);
}

}  // namespace
}  // namespace ctiunet
