#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairdi/datagen.hpp"
#include "fairdi/distillation.hpp"
#include "fairdi/fairloss.hpp"
#include "fairdi/metrics.hpp"
#include "fairdi/nnkernel.hpp"
#include "fairdi/rng.hpp"

namespace fairdi {

enum class Stage { erm, step0_fis, step1_teacher, step2_student };

// uniform: shuffled passes over the data. round_robin: batches alternate
// between attribute groups, cycling (and reshuffling) each group's samples.
enum class Sampling { uniform, round_robin };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainPlan {
  Stage stage = Stage::step0_fis;
  int max_epochs = 30;
  int patience = 5;
  std::size_t batch_size = 64;
  Sampling sampling = Sampling::round_robin;
  OptimizerConfig optimizer;
  int lr_decay_every = 10;  // epochs; 0 keeps the rate constant
  double lr_decay_factor = 0.1;
  FisConfig fis;
  DistillConfig distill;  // stage 2 only
  double cutmix_beta = 1.0;
  double cutmix_prob = 0.5;
  std::vector<std::size_t> hidden{64, 32};  // backbone widths (erm, stage 0)
  std::uint64_t seed = 42;
  std::optional<int> group;  // stage 1 cohort

  void validate() const;
};

// Per-stage defaults: Adam 1e-4 with decay for erm/stage 0, constant-rate
// SGD with momentum for the head-only stages. ERM samples uniformly.
TrainPlan default_plan(Stage stage, std::uint64_t seed = 42);

nlohmann::json plan_to_json(const TrainPlan& plan);
TrainPlan plan_from_json(const nlohmann::json& j, TrainPlan base);

struct EpochLog {
  int epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_overall_auc = 0.0;
  double val_worst_auc = 0.0;
  double selection = 0.0;  // the early-stopping metric
};

struct ExperimentRecord {
  std::string stage;
  std::optional<int> group;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 0: no epoch trained, initial parameters kept
  std::string checkpoint_id;
  std::string stop_reason;
};

nlohmann::json record_to_json(const ExperimentRecord& rec);
std::string record_to_csv(const ExperimentRecord& rec);

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::string> warnings;
};

// Stratified by (label, attribute); falls back to label-only strata with a
// warning when some stratum cannot reach every split.
Split split(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed);

Dataset cohort(const Dataset& ds, int group);
std::vector<int> attribute_values(const Dataset& ds);

// Swaps a box (image mode) or contiguous span (flat mode) between each sample
// and partners[i], mixing labels by the kept-area share. image_side 0 means flat.
Batch cutmix_with_lambda(const Batch& batch, std::span<const double> lambdas, std::span<const std::size_t> partners,
                         std::size_t image_side, Rng& rng);
// With probability prob, mixes each sample with a random partner at
// lambda ~ Beta(beta, beta). A batch of one is returned unchanged.
Batch cutmix(const Batch& batch, double beta, double prob, std::size_t image_side, Rng& rng);

// An epoch is ceil(N / batch_size) batches. In round_robin mode slot j of a
// batch draws from group (offset + j) mod G, the offset advancing across
// batches, so every batch of at least G samples holds each group.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, std::size_t batch_size, Sampling mode, std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_; }
  std::vector<std::vector<std::size_t>> epoch();

 private:
  std::size_t next_from(std::size_t stream);

  std::size_t total_;
  std::size_t batch_size_;
  std::size_t batches_;
  Sampling mode_;
  std::vector<std::vector<std::size_t>> streams_;
  std::vector<std::size_t> cursor_;
  std::size_t offset_ = 0;
  Rng rng_;
};

// Patience counter on a metric where larger is better. NaN never improves,
// except that the first observation always becomes the best.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  // Returns true when this epoch is the new best.
  bool observe(int epoch, double metric);
  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  int patience_;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_ = 0.0;
};

struct ValidationScore {
  double selection = 0.0;
  double overall = 0.0;
  double worst = 0.0;
};

using Validator = std::function<ValidationScore(int epoch, const DenseNet& net, const Head& head)>;

// Worst-case cohort AUC (overall AUC for the record) on a validation set.
Validator worst_case_validator(const Dataset& val);
// AUC on a single cohort of the validation set.
Validator cohort_validator(const Dataset& val, int group);

struct StageResult {
  DenseNet net;
  Head head;
  ExperimentRecord record;
  double wall_seconds = 0.0;
};

StageResult train_erm(const Dataset& train, const TrainPlan& plan, const Validator& validate);
StageResult train_erm(const Dataset& train, const TrainPlan& plan, const Validator& validate, DenseNet net, Head head);
StageResult train_stage0(const Dataset& train, const TrainPlan& plan, const Validator& validate);
StageResult train_stage0(const Dataset& train, const TrainPlan& plan, const Validator& validate, DenseNet net,
                         Head head);
// Fresh head on the frozen backbone, trained on the plan's cohort only.
StageResult train_stage1(const Dataset& train, const DenseNet& backbone, const TrainPlan& plan,
                         const Validator& validate);
StageResult train_stage2(const Dataset& train, const DenseNet& backbone, const std::map<int, Head>& teachers,
                         const TrainPlan& plan, const Validator& validate);

struct FairDiPlan {
  TrainPlan stage0 = default_plan(Stage::step0_fis);
  TrainPlan stage1 = default_plan(Stage::step1_teacher);
  TrainPlan stage2 = default_plan(Stage::step2_student);
  bool parallel_teachers = true;
};

FairDiPlan default_fairdi_plan(std::uint64_t seed);

struct FairDiResult {
  StageResult stage0;
  std::map<int, StageResult> teachers;
  StageResult student;
};

FairDiResult run_fairdi(const Split& data, const FairDiPlan& plan);

std::vector<ClassificationRecord> predict_scores(const DenseNet& net, const Head& head, const Dataset& ds);
MetricsReport evaluate(const DenseNet& net, const Head& head, const Dataset& ds);

}  // namespace fairdi
