#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "fairdi/error.hpp"
#include "fairdi/fairloss.hpp"
#include "oracles.hpp"

using namespace fairdi;

namespace {

Batch random_batch(Rng& rng, std::size_t n, std::size_t dim, int groups) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();
    b.inputs.push_back(x);
    b.targets.push_back(one_hot(static_cast<int>(rng.uniform_index(2)), 2));
    b.attributes.push_back(static_cast<int>(i % static_cast<std::size_t>(groups)));
  }
  return b;
}

// Eq. for the FIS weights written out directly: softmax over losses, softmax
// over per-group transport distances, convex mix, rescaled to sum N.
std::vector<double> straightline_weights(const std::vector<double>& l, const std::vector<int>& a, double c) {
  const std::size_t n = l.size();
  double zs = 0.0;
  for (const double v : l) zs += std::exp(v);
  std::map<int, std::vector<double>> by_group;
  for (std::size_t i = 0; i < n; ++i) by_group[a[i]].push_back(l[i]);
  std::map<int, double> sg;
  double zg = 0.0;
  for (const auto& [g, vals] : by_group) {
    sg[g] = std::exp(oracle::transport_w1(l, vals));
    zg += sg[g];
  }
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = (1.0 - c) * std::exp(l[i]) / zs + c * sg[a[i]] / zg;
    total += w[i];
  }
  for (double& v : w) v *= static_cast<double>(n) / total;
  return w;
}

}  // namespace

TEST(IndividualWeights, Examples) {
  const std::vector<double> eq(4, 0.7);
  for (const double w : individual_weights(eq)) EXPECT_NEAR(w, 0.25, 1e-15);
  const std::vector<double> two{std::log(2.0), 0.0};
  auto w = individual_weights(two);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-12);
  const std::vector<double> three{5.0, 0.0, 0.0};
  w = individual_weights(three);
  EXPECT_NEAR(w[0], 0.9867, 1e-4);
  EXPECT_NEAR(w[1], 0.00665, 1e-5);
}

TEST(IndividualWeights, EmptyBatch) {
  try {
    individual_weights(std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_batch);
  }
}

TEST(Wasserstein, Examples) {
  EXPECT_EQ(wasserstein1d(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1d(std::vector<double>{0.0}, std::vector<double>{1.0}), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1d(std::vector<double>{0.0, 2.0}, std::vector<double>{1.0, 3.0}), 1.0);
  LossDistribution a{{1.0, 2.0, 3.0}, 0};
  LossDistribution b{{2.0}, 1};
  EXPECT_NEAR(wasserstein1d(a, b), 2.0 / 3.0, 1e-15);
}

TEST(Wasserstein, EmptyDistribution) {
  try {
    wasserstein1d(std::vector<double>{}, std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_distribution);
  }
}

TEST(Wasserstein, MatchesTransportOracle) {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(1 + rng.uniform_index(6)), b(1 + rng.uniform_index(6));
    for (double& v : a) v = rng.uniform(0.0, 3.0);
    for (double& v : b) v = rng.uniform(0.0, 3.0);
    EXPECT_NEAR(wasserstein1d(a, b), oracle::transport_w1(a, b), 1e-10);
  }
}

TEST(Wasserstein, SymmetricAndTriangle) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(1 + rng.uniform_index(7)), b(1 + rng.uniform_index(7)), c(1 + rng.uniform_index(7));
    for (auto* v : {&a, &b, &c})
      for (double& x : *v) x = rng.normal();
    EXPECT_NEAR(wasserstein1d(a, b), wasserstein1d(b, a), 1e-12);
    EXPECT_LE(wasserstein1d(a, c), wasserstein1d(a, b) + wasserstein1d(b, c) + 1e-12);
  }
}

TEST(GroupWeights, Examples) {
  const std::vector<double> same{0.2, 0.9, 0.2, 0.9};
  const std::vector<int> attrs{0, 0, 1, 1};
  auto w = group_weights(same, attrs);
  EXPECT_NEAR(w.at(0), 0.5, 1e-15);
  EXPECT_NEAR(w.at(1), 0.5, 1e-15);

  const std::vector<double> one{0.1, 0.5};
  const std::vector<int> only{3, 3};
  w = group_weights(one, only);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_DOUBLE_EQ(w.at(3), 1.0);

  const std::vector<double> split{0.0, 0.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(wasserstein1d(split, std::vector<double>{0.0, 0.0}), 0.5);
  w = group_weights(split, attrs);
  EXPECT_NEAR(w.at(0), 0.5, 1e-15);
}

TEST(GroupWeights, AbsentGroupIsDropped) {
  const std::vector<double> l{0.3, 0.8};
  const std::vector<int> a{0, 0};
  const auto w = group_weights(l, a, std::set<int>{0, 1});
  EXPECT_EQ(w.size(), 1u);
  EXPECT_FALSE(std::isnan(w.at(0)));
}

TEST(FisWeights, Endpoints) {
  const std::vector<double> l{0.1, 0.4, 1.3, 0.2};
  const std::vector<int> a{0, 1, 0, 1};
  const auto si = individual_weights(l);
  const auto w0 = fis_weights(l, a, FisConfig{0.0, WeightRescale::sum_to_n});
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(w0[i], 4.0 * si[i], 1e-14);

  const std::vector<double> sym{0.2, 0.2, 0.2, 0.2};
  for (const double w : fis_weights(sym, a, FisConfig{1.0, WeightRescale::sum_to_n})) EXPECT_NEAR(w, 1.0, 1e-15);

  const std::vector<double> hand{0.0, 0.0, 1.0, 1.0};
  const std::vector<int> ha{0, 0, 1, 1};
  const auto raw = fis_raw_weights(hand, ha, 0.5);
  const auto s = individual_weights(hand);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(raw[i], 0.5 * s[i] + 0.5 * 0.5, 1e-15);
}

TEST(FisWeights, RescaleModes) {
  const std::vector<double> l{0.1, 0.4, 1.3, 0.2, 0.9};
  const std::vector<int> a{0, 1, 0, 1, 1};
  double n_sum = 0.0, one_sum = 0.0;
  for (const double w : fis_weights(l, a, FisConfig{0.5, WeightRescale::sum_to_n})) n_sum += w;
  for (const double w : fis_weights(l, a, FisConfig{0.5, WeightRescale::sum_to_one})) one_sum += w;
  EXPECT_NEAR(n_sum, 5.0, 1e-12);
  EXPECT_NEAR(one_sum, 1.0, 1e-12);
}

TEST(FisWeights, InvalidC) {
  const std::vector<double> l{0.1};
  const std::vector<int> a{0};
  try {
    fis_weights(l, a, FisConfig{1.5, WeightRescale::sum_to_n});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_parameter);
  }
}

TEST(FisLoss, ReducesToMeanCrossEntropy) {
  Rng rng(4);
  const std::size_t hidden[] = {3};
  const DenseNet net = make_mlp(2, hidden, rng);
  Head head = make_head(3, 2, rng);
  head.weight = Matrix(2, 3);
  head.bias = {0.0, 0.0};
  const Batch b = random_batch(rng, 4, 2, 2);
  const auto r = fis_loss(b, net, head, FisConfig{0.0, WeightRescale::sum_to_n});
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-14);
}

TEST(FisLoss, SingleSample) {
  Rng rng(8);
  const std::size_t hidden[] = {3};
  const DenseNet net = make_mlp(2, hidden, rng);
  const Head head = make_head(3, 2, rng);
  const Batch b = random_batch(rng, 1, 2, 1);
  const auto r = fis_loss(b, net, head, FisConfig{});
  EXPECT_NEAR(r.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(r.loss, cross_entropy(forward(net, head, b.inputs[0]).probs, b.targets[0]), 1e-15);
}

TEST(FisLoss, MatchesStraightlineRecomputation) {
  Rng rng(99);
  const std::size_t hidden[] = {6, 4};
  const DenseNet net = make_mlp(5, hidden, rng);
  const Head head = make_head(4, 2, rng);
  const Batch b = random_batch(rng, 8, 5, 3);
  const auto r = fis_loss(b, net, head, FisConfig{0.5, WeightRescale::sum_to_n});
  std::vector<double> l;
  for (std::size_t i = 0; i < b.size(); ++i) {
    l.push_back(oracle::ce(oracle::softmax(oracle::logits(head, oracle::features(net, b.inputs[i])), 1.0), b.targets[i]));
  }
  const auto w = straightline_weights(l, b.attributes, 0.5);
  double expect = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    EXPECT_NEAR(r.weights[i], w[i], 1e-12);
    expect += w[i] * l[i];
  }
  EXPECT_NEAR(r.loss, expect / 8.0, 1e-12);
}

TEST(FisLoss, GradientWithFixedWeightsMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 31);
    const std::size_t hidden[] = {5, 4};
    DenseNet net = make_mlp(3, hidden, rng);
    Head head = make_head(4, 2, rng);
    const Batch b = random_batch(rng, 7, 3, 2);
    const auto w = fis_loss(b, net, head, FisConfig{}).weights;
    const auto analytic = oracle::flatten(fis_gradients(b, net, head, w));
    auto loss = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i)
        s += w[i] * oracle::ce(oracle::softmax(oracle::logits(head, oracle::features(net, b.inputs[i])), 1.0),
                               b.targets[i]);
      return s / static_cast<double>(b.size());
    };
    EXPECT_LT(oracle::fd_max_rel_error(oracle::parameters(net, head, true), analytic, loss), 1e-4) << "seed " << seed;
  }
}

TEST(FisLoss, NonFiniteLossIsNumericError) {
  const std::vector<double> l{0.1, NAN};
  const std::vector<int> a{0, 1};
  try {
    fis_weights(l, a, FisConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric_error);
  }
}
