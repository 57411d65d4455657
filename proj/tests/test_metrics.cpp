#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "fairdi/csv.hpp"
#include "fairdi/error.hpp"
#include "fairdi/metrics.hpp"
#include "fairdi/rng.hpp"
#include "oracles.hpp"

using namespace fairdi;

TEST(Auc, Examples) {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(sep, y), 1.0);
  const std::vector<double> flat(4, 0.3);
  EXPECT_DOUBLE_EQ(auc(flat, y), 0.5);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
}

TEST(Auc, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.4};
  const std::vector<int> y{1, 1};
  try {
    auc(s, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::undefined_metric);
  }
}

TEST(Auc, MatchesPairCountingWithTies) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.uniform_index(300);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = t % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.uniform_index(5)) : rng.normal();
      y[i] = static_cast<int>(rng.uniform_index(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auc(s, y), oracle::brute_auc(s, y), 1e-12);
  }
}

TEST(Auc, Properties) {
  Rng rng(6);
  std::vector<double> s(50);
  std::vector<int> y(50), flipped(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = rng.normal();
    y[i] = static_cast<int>(i % 2);
    flipped[i] = 1 - y[i];
  }
  std::vector<double> t(50);
  for (std::size_t i = 0; i < 50; ++i) t[i] = std::exp(3.0 * s[i]) + 1.0;
  EXPECT_DOUBLE_EQ(auc(s, y), auc(t, y));
  EXPECT_NEAR(auc(s, y) + auc(s, flipped), 1.0, 1e-12);
}

TEST(Roc, EndsAtCorners) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  const auto pts = roc_curve(s, y);
  EXPECT_TRUE(std::isinf(pts.front().threshold));
  EXPECT_EQ(pts.front().fpr, 0.0);
  EXPECT_EQ(pts.back().tpr, 1.0);
  EXPECT_EQ(pts.back().fpr, 1.0);
}

TEST(EsAuc, Examples) {
  EXPECT_DOUBLE_EQ(es_auc(0.9, {{0, 0.9}, {1, 0.9}}), 0.9);
  EXPECT_NEAR(es_auc(0.9447, {{0, 0.9467}, {1, 0.9266}}), 0.9353, 5e-4);
  EXPECT_NEAR(es_auc(0.8, {{0, 0.9}, {1, 0.7}}), 0.8 / 1.1, 1e-12);
  EXPECT_THROW(es_auc(0.8, {}), Error);
}

TEST(Psd, Examples) {
  auto p = psd(0.9, {{0, 0.8}, {1, 0.8}});
  EXPECT_EQ(p.mean_psd, 0.0);
  EXPECT_EQ(p.max_psd, 0.0);
  p = psd(0.9447, {{0, 0.9467}, {1, 0.9266}});
  EXPECT_NEAR(p.mean_psd, 0.01064, 2e-4);
  EXPECT_NEAR(p.max_psd, 0.02128, 2e-4);
  try {
    psd(0.0, {{0, 0.5}, {1, 0.6}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::undefined_metric);
  }
}

TEST(Psd, TwoGroupMaxIsTwiceMean) {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    const double o = rng.uniform(0.05, 1.0);
    const auto p = psd(o, {{0, rng.uniform()}, {1, rng.uniform()}});
    EXPECT_EQ(p.max_psd, 2.0 * p.mean_psd);
  }
}

TEST(Overlap, Examples) {
  Mask a{2, 4, {1, 1, 1, 1, 0, 0, 0, 0}};
  Mask b{2, 4, {0, 0, 1, 1, 1, 1, 0, 0}};
  Mask c{2, 4, {0, 0, 0, 0, 1, 1, 1, 1}};
  Mask empty{2, 4, std::vector<std::uint8_t>(8, 0)};
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, c), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, c), 0.0);
  EXPECT_DOUBLE_EQ(dice(a, b), 0.5);
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(dice(empty, empty), 1.0);
  EXPECT_DOUBLE_EQ(iou(empty, empty), 1.0);
  Mask other{4, 2, a.pixels};
  try {
    dice(a, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape_error);
  }
}

TEST(Overlap, DiceAtLeastIou) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    Mask x{3, 3, std::vector<std::uint8_t>(9)}, y{3, 3, std::vector<std::uint8_t>(9)};
    for (std::size_t i = 0; i < 9; ++i) {
      x.pixels[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
      y.pixels[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
    }
    EXPECT_GE(dice(x, y), iou(x, y) - 1e-15);
  }
}

TEST(EsOverlap, Examples) {
  EXPECT_DOUBLE_EQ(es_overlap(0.7, {{0, 0.7}, {1, 0.7}}), 0.7);
  EXPECT_NEAR(es_overlap(0.8532, {{0, 0.8386}, {1, 0.8527}, {2, 0.8555}}), 0.8386, 5e-4);
  EXPECT_NEAR(es_overlap(0.8, {{0, 0.9}, {1, 0.7}}), 0.8 / 1.2, 1e-12);
}

TEST(Report, SingleGroup) {
  PredictionSet ps;
  ps.classification = {{"a", 0.2, 0, 0}, {"b", 0.7, 1, 0}, {"c", 0.4, 1, 0}, {"d", 0.5, 0, 0}};
  const auto r = report(ps, Task::classification);
  const auto& b = r.block("auc");
  EXPECT_EQ(b.gap, 0.0);
  EXPECT_EQ(b.worst_case, b.overall);
  EXPECT_EQ(b.equity_scaled, b.overall);
}

TEST(Report, TwoGroupToySet) {
  PredictionSet ps;
  // group 0: perfectly ranked; group 1: one swapped pair out of four
  ps.classification = {{"1", 0.1, 0, 0}, {"2", 0.2, 0, 0}, {"3", 0.8, 1, 0}, {"4", 0.9, 1, 0},
                       {"5", 0.3, 0, 1}, {"6", 0.6, 0, 1}, {"7", 0.5, 1, 1}, {"8", 0.7, 1, 1}};
  const auto& b = report(ps, Task::classification).block("auc");
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : ps.classification) {
    s.push_back(r.score);
    y.push_back(r.label);
  }
  const double overall = oracle::brute_auc(s, y);
  EXPECT_DOUBLE_EQ(b.overall, overall);
  EXPECT_DOUBLE_EQ(b.per_group.at(0), 1.0);
  EXPECT_DOUBLE_EQ(b.per_group.at(1), 0.75);
  EXPECT_DOUBLE_EQ(b.worst_case, 0.75);
  EXPECT_DOUBLE_EQ(b.gap, 0.25);
  EXPECT_NEAR(b.equity_scaled, overall / (1.0 + (std::abs(overall - 1.0) + std::abs(overall - 0.75)) / 2.0), 1e-15);
  EXPECT_NEAR(*b.max_psd, 0.25 / overall, 1e-15);
  EXPECT_NEAR(*b.mean_psd, 0.125 / overall, 1e-15);
}

TEST(Report, SegmentationOmitsPsd) {
  PredictionSet ps;
  Mask a{1, 4, {1, 1, 0, 0}};
  Mask b{1, 4, {1, 0, 0, 0}};
  ps.segmentation = {{"x", a, a, 0}, {"y", a, b, 1}};
  const auto r = report(ps, Task::segmentation);
  EXPECT_FALSE(r.block("dice").mean_psd.has_value());
  EXPECT_DOUBLE_EQ(r.block("dice").per_group.at(1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.block("iou").per_group.at(1), 0.5);
}

// Table 2 rows: the second cohort AUC is Min AUC + AUC Gap.
TEST(PaperFixture, Table2DerivedColumns) {
  const CsvTable t = read_csv(std::string(FAIRDI_TEST_DATA) + "/table2_classification.csv");
  int fairdi_rows = 0, fairdi_ok = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto col = [&](const char* name) { return std::stod(t.rows[r][t.column(name, "table2")]); };
    const double overall = col("overall_auc"), mn = col("min_auc"), gap = col("auc_gap");
    const MetricBlock b = summarize_groups("auc", overall, {{0, mn}, {1, mn + gap}}, EquityScaling::mean_discrepancy, true);
    const bool ok = std::abs(b.equity_scaled - col("es_auc")) <= 5e-4 && std::abs(*b.mean_psd - col("mean_psd")) <= 5e-4 &&
                    std::abs(*b.max_psd - col("max_psd")) <= 5e-4;
    if (t.rows[r][t.column("method", "table2")] == "FairDi") {
      ++fairdi_rows;
      fairdi_ok += ok;
    }
  }
  EXPECT_EQ(fairdi_rows, 11);
  EXPECT_GE(fairdi_ok, 8);
}
