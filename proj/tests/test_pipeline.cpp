#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "fairdi/error.hpp"
#include "fairdi/pipeline.hpp"

using namespace fairdi;

namespace {

Dataset small_dataset(std::size_t n = 600, std::uint64_t seed = 3) {
  GenSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  return generate(spec).dataset;
}

// Validator replaying a fixed sequence of selection scores.
Validator mocked(std::vector<double> seq) {
  return [seq](int epoch, const DenseNet&, const Head&) {
    const double v = seq[std::min<std::size_t>(epoch - 1, seq.size() - 1)];
    return ValidationScore{v, v, v};
  };
}

TrainPlan quick_plan(Stage st, int epochs) {
  TrainPlan p = default_plan(st, 5);
  p.max_epochs = epochs;
  p.hidden = {8, 4};
  p.batch_size = 32;
  return p;
}

std::map<std::pair<int, int>, int> strata(const Dataset& d) {
  std::map<std::pair<int, int>, int> m;
  for (const auto& s : d.samples) ++m[{s.label, s.attribute}];
  return m;
}

}  // namespace

TEST(Split, TrivialRatios) {
  const Dataset ds = small_dataset(100);
  const Split s = split(ds, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train.size(), 100u);
  EXPECT_EQ(s.val.size(), 0u);
  const Split t = split(ds, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(t.train.size(), 80u);
  EXPECT_EQ(t.val.size(), 10u);
  EXPECT_EQ(t.test.size(), 10u);
}

TEST(Split, PartitionAndStratification) {
  const Dataset ds = small_dataset(2000);
  const Split s = split(ds, {0.8, 0.1, 0.1}, 9);
  EXPECT_TRUE(s.warnings.empty());
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), ds.size());
  // Every sample lands in exactly one split: compare multisets of rows.
  std::multiset<std::vector<double>> all, parts;
  for (const auto& x : ds.samples) all.insert(x.features);
  for (const auto* d : {&s.train, &s.val, &s.test})
    for (const auto& x : d->samples) parts.insert(x.features);
  EXPECT_EQ(all, parts);
  // Each (label, attribute) stratum is within one sample of its share.
  const auto whole = strata(ds);
  const auto tr = strata(s.train);
  const auto te = strata(s.test);
  for (const auto& [key, n] : whole) {
    EXPECT_NEAR(tr.at(key), 0.8 * n, 1.0 + 1e-9);
    EXPECT_NEAR(te.at(key), 0.1 * n, 1.0 + 1e-9);
  }
  EXPECT_EQ(split(ds, {0.8, 0.1, 0.1}, 9).test, s.test);
}

TEST(Split, TinyStratumFallsBack) {
  Dataset ds = small_dataset(200);
  ds.samples.push_back({ds.samples[0].features, 1, 7});
  const Split s = split(ds, {0.8, 0.1, 0.1}, 2);
  EXPECT_FALSE(s.warnings.empty());
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), ds.size());
}

TEST(CutMix, LambdaOneKeepsBatch) {
  Batch b;
  b.inputs = {std::vector<double>(16, 1.0), std::vector<double>(16, 2.0)};
  b.targets = {one_hot(0, 2), one_hot(1, 2)};
  b.attributes = {0, 1};
  Rng rng(1);
  const double lam[] = {1.0, 1.0};
  const std::size_t partner[] = {1, 0};
  const Batch out = cutmix_with_lambda(b, lam, partner, 4, rng);
  EXPECT_EQ(out.inputs, b.inputs);
  EXPECT_EQ(out.targets, b.targets);
}

TEST(CutMix, LambdaZeroSwaps) {
  Batch b;
  b.inputs = {std::vector<double>(16, 1.0), std::vector<double>(16, 2.0)};
  b.targets = {one_hot(0, 2), one_hot(1, 2)};
  b.attributes = {0, 1};
  Rng rng(1);
  const double lam[] = {0.0, 0.0};
  const std::size_t partner[] = {1, 0};
  const Batch out = cutmix_with_lambda(b, lam, partner, 4, rng);
  EXPECT_EQ(out.inputs[0], b.inputs[1]);
  EXPECT_EQ(out.targets[0], b.targets[1]);
  EXPECT_EQ(out.targets[1], b.targets[0]);
}

TEST(CutMix, FourCellBox) {
  Batch b;
  b.inputs = {std::vector<double>(16, 0.0), std::vector<double>(16, 1.0)};
  b.targets = {one_hot(0, 2), one_hot(1, 2)};
  b.attributes = {0, 0};
  Rng rng(4);
  const double lam[] = {0.75, 1.0};
  const std::size_t partner[] = {1, 0};
  const Batch out = cutmix_with_lambda(b, lam, partner, 4, rng);
  int pasted = 0;
  for (const double v : out.inputs[0]) pasted += v == 1.0;
  EXPECT_EQ(pasted, 4);
  EXPECT_DOUBLE_EQ(out.targets[0][0], 0.75);
  EXPECT_DOUBLE_EQ(out.targets[0][1], 0.25);
  // the pasted cells form a 2x2 block
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < 16; ++i) {
    if (out.inputs[0][i] == 1.0) {
      rows.push_back(i / 4);
      cols.push_back(i % 4);
    }
  }
  EXPECT_EQ(*std::max_element(rows.begin(), rows.end()) - *std::min_element(rows.begin(), rows.end()), 1u);
  EXPECT_EQ(*std::max_element(cols.begin(), cols.end()) - *std::min_element(cols.begin(), cols.end()), 1u);
}

TEST(CutMix, SingleSampleUnchanged) {
  Batch b;
  b.inputs = {std::vector<double>(9, 0.5)};
  b.targets = {one_hot(1, 2)};
  b.attributes = {0};
  Rng rng(2);
  const Batch out = cutmix(b, 1.0, 1.0, 3, rng);
  EXPECT_EQ(out.inputs, b.inputs);
  EXPECT_EQ(out.targets, b.targets);
}

TEST(Sampler, RoundRobinBalancesGroups) {
  const Dataset ds = small_dataset(300);
  BatchSampler s(ds, 10, Sampling::round_robin, 1);
  EXPECT_EQ(s.batches_per_epoch(), 30u);
  for (const auto& batch : s.epoch()) {
    int g1 = 0;
    for (const std::size_t i : batch) g1 += ds.samples[i].attribute;
    EXPECT_EQ(g1, 5);
  }
}

TEST(Sampler, UniformCoversEverySampleOnce) {
  const Dataset ds = small_dataset(95);
  BatchSampler s(ds, 10, Sampling::uniform, 1);
  std::vector<std::size_t> seen;
  for (const auto& b : s.epoch()) seen.insert(seen.end(), b.begin(), b.end());
  std::sort(seen.begin(), seen.end());
  ASSERT_EQ(seen.size(), 95u);
  for (std::size_t i = 0; i < 95; ++i) EXPECT_EQ(seen[i], i);
}

TEST(EarlyStop, MockedSequence) {
  EarlyStopper s(5);
  const double seq[] = {0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7};
  int epoch = 0;
  for (const double v : seq) {
    s.observe(++epoch, v);
    if (s.should_stop()) break;
  }
  EXPECT_EQ(epoch, 7);
  EXPECT_EQ(s.best_epoch(), 2);
}

TEST(Training, MockedValidationStopsEarly) {
  const Dataset ds = small_dataset(200);
  const auto r = train_stage0(ds, quick_plan(Stage::step0_fis, 30), mocked({0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7}));
  EXPECT_EQ(r.record.epochs.size(), 7u);
  EXPECT_EQ(r.record.best_epoch, 2);
  EXPECT_EQ(r.record.stop_reason, "early_stop");
  EXPECT_EQ(r.record.checkpoint_id, "step0_fis@epoch2");
}

TEST(Training, RestoresBestEpochParameters) {
  const Dataset ds = small_dataset(200);
  const TrainPlan p = quick_plan(Stage::step0_fis, 2);
  const auto two = train_stage0(ds, p, mocked({0.9, 0.1}));
  TrainPlan one = p;
  one.max_epochs = 1;
  const auto first = train_stage0(ds, one, mocked({0.9}));
  EXPECT_EQ(two.record.best_epoch, 1);
  EXPECT_EQ(parameter_hash(two.net), parameter_hash(first.net));
  EXPECT_EQ(parameter_hash(two.head), parameter_hash(first.head));
}

TEST(Training, MonotoneMetricRunsToTheEnd) {
  const Dataset ds = small_dataset(200);
  const auto r = train_stage0(ds, quick_plan(Stage::step0_fis, 8), mocked({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}));
  EXPECT_EQ(r.record.best_epoch, 8);
  EXPECT_EQ(r.record.stop_reason, "max_epochs");
}

TEST(Training, ZeroEpochsKeepsInitialization) {
  const Dataset ds = small_dataset(100);
  const TrainPlan p = quick_plan(Stage::step0_fis, 0);
  const auto a = train_stage0(ds, p, mocked({0.5}));
  const auto b = train_stage0(ds, p, mocked({0.5}));
  EXPECT_TRUE(a.record.epochs.empty());
  EXPECT_EQ(a.record.best_epoch, 0);
  EXPECT_EQ(a.net, b.net);

  TrainPlan t = quick_plan(Stage::step1_teacher, 0);
  t.group = 1;
  const auto h0 = train_stage1(ds, a.net, t, mocked({0.5}));
  const auto h1 = train_stage1(ds, a.net, t, mocked({0.5}));
  EXPECT_EQ(h0.head, h1.head);
}

TEST(Training, ErmMatchesStage0WhenWeightsAreUniform) {
  Dataset ds = small_dataset(16);
  TrainPlan pe = quick_plan(Stage::erm, 1);
  TrainPlan p0 = quick_plan(Stage::step0_fis, 1);
  for (TrainPlan* p : {&pe, &p0}) {
    p->batch_size = 16;
    p->cutmix_prob = 0.0;
  }
  p0.fis.c = 0.0;
  p0.sampling = Sampling::uniform;
  Rng rng(1);
  const std::size_t hidden[] = {8, 4};
  const DenseNet net = make_mlp(ds.feature_dim, hidden, rng);
  Head head = make_head(4, 2, rng);
  head.weight = Matrix(2, 4);
  head.bias = {0.0, 0.0};
  const auto e = train_erm(ds, pe, mocked({0.5}), net, head);
  const auto f = train_stage0(ds, p0, mocked({0.5}), net, head);
  for (std::size_t i = 0; i < e.head.weight.data.size(); ++i) EXPECT_NEAR(e.head.weight.data[i], f.head.weight.data[i], 1e-12);
  for (std::size_t l = 0; l < e.net.layers.size(); ++l)
    for (std::size_t i = 0; i < e.net.layers[l].weight.data.size(); ++i)
      EXPECT_NEAR(e.net.layers[l].weight.data[i], f.net.layers[l].weight.data[i], 1e-12);
}

TEST(Training, FreezeContract) {
  const Dataset ds = small_dataset(400);
  const auto s0 = train_stage0(ds, quick_plan(Stage::step0_fis, 2), mocked({0.5, 0.6}));
  const auto before = parameter_hash(s0.net);
  std::map<int, Head> teachers;
  for (const int g : attribute_values(ds)) {
    TrainPlan t = quick_plan(Stage::step1_teacher, 3);
    t.group = g;
    const auto r = train_stage1(ds, s0.net, t, cohort_validator(ds, g));
    EXPECT_EQ(parameter_hash(r.net), before);
    teachers[g] = r.head;
  }
  const auto st = train_stage2(ds, s0.net, teachers, quick_plan(Stage::step2_student, 3), worst_case_validator(ds));
  EXPECT_EQ(parameter_hash(st.net), before);
  EXPECT_EQ(parameter_hash(s0.net), before);
}

TEST(Training, StageErrors) {
  const Dataset ds = small_dataset(100);
  const auto s0 = train_stage0(ds, quick_plan(Stage::step0_fis, 0), mocked({0.5}));
  TrainPlan t = quick_plan(Stage::step1_teacher, 1);
  t.group = 9;
  try {
    train_stage1(ds, s0.net, t, mocked({0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cohort_empty);
  }
  std::map<int, Head> only0{{0, s0.head}};
  try {
    train_stage2(ds, s0.net, only0, quick_plan(Stage::step2_student, 1), mocked({0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::configuration);
  }
}

TEST(Training, DeterministicAcrossRuns) {
  const Dataset ds = small_dataset(300);
  const Split sp = split(ds, {0.6, 0.2, 0.2}, 4);
  FairDiPlan plan = default_fairdi_plan(4);
  for (TrainPlan* p : {&plan.stage0, &plan.stage1, &plan.stage2}) {
    p->max_epochs = 2;
    p->hidden = {8, 4};
  }
  const auto a = run_fairdi(sp, plan);
  const auto b = run_fairdi(sp, plan);
  EXPECT_EQ(a.stage0.net, b.stage0.net);
  EXPECT_EQ(a.student.head, b.student.head);
  EXPECT_EQ(record_to_json(a.student.record), record_to_json(b.student.record));
  for (const auto& [g, t] : a.teachers) EXPECT_EQ(t.head, b.teachers.at(g).head);
}

TEST(PlanJson, RoundTrip) {
  TrainPlan p = default_plan(Stage::step2_student, 3);
  p.distill.lambda = 0.5;
  p.distill.kl_direction = KlDirection::teacher_first;
  const TrainPlan q = plan_from_json(plan_to_json(p), default_plan(Stage::step2_student, 0));
  EXPECT_EQ(q.distill.lambda, 0.5);
  EXPECT_EQ(q.distill.kl_direction, KlDirection::teacher_first);
  EXPECT_EQ(q.seed, 3u);
  EXPECT_EQ(plan_to_json(q), plan_to_json(p));
}
