#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>
#include <sstream>

#include "ctiunet/errors.hpp"
#include "ctiunet/metrics.hpp"
#include "test_util.hpp"

namespace ctiunet {
namespace {

Tensor4 grid2(std::vector<double> v) { return Tensor4({1, 1, 2, 2}, std::move(v)); }

TEST(Confusion, HandInstance) {
  const ConfusionCounts c = confusion(grid2({1, 1, 0, 0}), grid2({1, 0, 0, 0}));
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 0, 2}));
  EXPECT_DOUBLE_EQ(dsc(c), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(c), 0.5);
}

TEST(Confusion, AllOnesAndEmpty) {
  const Tensor4 ones({1, 1, 4, 4}, 1.0);
  const Tensor4 zeros({1, 1, 4, 4}, 0.0);
  const ConfusionCounts full = confusion(ones, ones);
  EXPECT_EQ(full.tp, 16u);
  EXPECT_EQ(dsc(full), 1.0);
  EXPECT_EQ(iou(full), 1.0);
  const ConfusionCounts none = confusion(zeros, zeros);
  EXPECT_EQ(none.tn, 16u);
  EXPECT_EQ(dsc(none), 1.0);
  EXPECT_EQ(iou(none), 1.0);
  EXPECT_EQ(dsc(confusion(zeros, ones)), 0.0);
}

TEST(Confusion, RejectsNonBinaryOrShapeMismatch) {
  EXPECT_THROW(confusion(grid2({0.5, 0, 0, 0}), grid2({0, 0, 0, 0})), ValidationError);
  EXPECT_THROW(confusion(grid2({0, 0, 0, 0}), Tensor4({1, 1, 2, 3})), ValidationError);
}

TEST(Confusion, RandomPropertiesAgainstCounting) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor4 a = testing::random_mask({1, 1, 9, 7}, seed, 0.3);
    const Tensor4 b = testing::random_mask({1, 1, 9, 7}, seed + 1000, 0.4);
    ConfusionCounts want;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool p = a[i] > 0.5, g = b[i] > 0.5;
      (p && g ? want.tp : p ? want.fp : g ? want.fn : want.tn)++;
    }
    const ConfusionCounts c = confusion(a, b);
    ASSERT_EQ(c, want);
    EXPECT_EQ(c.total(), a.size());
    EXPECT_DOUBLE_EQ(dsc(c), dsc(confusion(b, a)));
    EXPECT_DOUBLE_EQ(iou(c), iou(confusion(b, a)));
    EXPECT_GE(dsc(c) + 1e-15, iou(c));
    // DSC and IoU are related by d = 2j / (1 + j).
    EXPECT_NEAR(dsc(c), 2 * iou(c) / (1 + iou(c)), 1e-12);
  }
}

TEST(Aggregate, SampleWeightedAll) {
  std::vector<SampleScore> s{{Condition::kDN, 1.0, 1.0, "a"},
                             {Condition::kDN, 0.5, 0.25, "b"},
                             {Condition::kDN, 0.0, 0.0, "c"},
                             {Condition::kNormal, 0.9, 0.8, "d"}};
  const MetricsReport r = aggregate(s);
  ASSERT_NE(r.find("DN"), nullptr);
  EXPECT_EQ(r.find("DN")->n, 3u);
  EXPECT_DOUBLE_EQ(r.find("DN")->dsc_mean, 0.5);
  EXPECT_DOUBLE_EQ(r.find("Normal")->dsc_mean, 0.9);
  EXPECT_EQ(r.all.n, 4u);
  EXPECT_DOUBLE_EQ(r.all.dsc_mean, 2.4 / 4);
  EXPECT_DOUBLE_EQ(r.all.iou_mean, 2.05 / 4);
  EXPECT_EQ(r.find("NEP25"), nullptr);
}

TEST(Aggregate, PermutationInvariant) {
  std::vector<SampleScore> s;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  const Condition conds[] = {Condition::k56Nx, Condition::kDN, Condition::kNEP25,
                             Condition::kNormal};
  for (int i = 0; i < 40; ++i) {
    const double d = u(rng);
    s.push_back({conds[i % 4], d, d / (2 - d), std::to_string(i)});
  }
  const MetricsReport ref = aggregate(s);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(s.begin(), s.end(), rng);
    const MetricsReport r = aggregate(s);
    EXPECT_NEAR(r.all.dsc_mean, ref.all.dsc_mean, 1e-12);
    for (const auto& row : ref.conditions)
      EXPECT_NEAR(r.find(row.label)->dsc_mean, row.dsc_mean, 1e-12);
    EXPECT_EQ(r.render_table(), ref.render_table());
  }
}

TEST(Report, TableFormat) {
  std::vector<SampleScore> s{{Condition::k56Nx, 0.9314, 0.8779, "a"},
                             {Condition::kDN, 0.9141, 0.85, "b"},
                             {Condition::kNEP25, 0.9141, 0.85, "c"},
                             {Condition::kNormal, 0.9473, 0.9, "d"}};
  const MetricsReport r = aggregate(s);
  EXPECT_EQ(report_columns(r),
            (std::vector<std::string>{"5/6Nx", "DN", "NEP25", "Normal", "All"}));
  const std::string table = r.render_table();
  const std::regex row(R"(Our Method \| 93\.14 \| 91\.41 \| 91\.41 \| 94\.73 +\| 92\.67)");
  EXPECT_TRUE(std::regex_search(table, row)) << table;
  EXPECT_NE(table.find("Method     | 5/6Nx | DN    | NEP25 | Normal | All"),
            std::string::npos)
      << table;
  EXPECT_NE(r.render_table("Baseline").find("Baseline |"), std::string::npos);
}

TEST(Report, SyntheticColumnOnlyWhenPresent) {
  MetricsReport r = aggregate({{Condition::kDN, 1.0, 1.0, "a"}});
  EXPECT_EQ(report_columns(r).size(), 5u);
  EXPECT_EQ(report_columns(r)[3], "Normal");
  r = aggregate({{Condition::kSynthetic, 1.0, 1.0, "a"}});
  ASSERT_EQ(report_columns(r).size(), 6u);
  EXPECT_EQ(report_columns(r)[4], "Synthetic");
}

TEST(Report, TsvColumns) {
  MetricsReport r = aggregate({{Condition::kDN, 2.0 / 3.0, 0.5, "a"}});
  r.seed = 7;
  r.config_hash = "abc";
  std::istringstream in(r.to_tsv());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "condition\tn\tdsc_mean\tiou_mean");
  EXPECT_EQ(rows[1], "DN\t1\t66.67\t50.00");
  EXPECT_EQ(rows[2], "All\t1\t66.67\t50.00");
  EXPECT_NE(r.to_tsv().find("config_hash=abc"), std::string::npos);
}

}  // namespace
}  // namespace ctiunet
