#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fairdi {

// Mann-Whitney AUC; ties between a positive and a negative count one half.
// Throws undefined_metric unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

// ROC vertices from the (inf, 0, 0) corner down to (lowest score, 1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// overall / (1 + (1/A) sum_g |overall - group_g|)
double es_auc(double overall, const std::map<int, double>& per_group);

struct Psd {
  double mean_psd;  // population std of group values / overall
  double max_psd;   // (max - min) of group values / overall
};

Psd psd(double overall, const std::map<int, double>& per_group);

// overall / (1 + sum_g |overall - group_g|); used for ES-Dice and ES-IoU.
double es_overlap(double overall, const std::map<int, double>& per_group);

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, nonzero = foreground

  std::size_t count() const;
};

// Both empty masks score 1.
double dice(const Mask& truth, const Mask& pred);
double iou(const Mask& truth, const Mask& pred);

enum class Task { classification, segmentation };

struct ClassificationRecord {
  std::string id;
  double score = 0.0;
  int label = 0;
  int attribute = 0;
};

struct SegmentationRecord {
  std::string id;
  Mask truth;
  Mask pred;
  int attribute = 0;
};

struct PredictionSet {
  std::vector<ClassificationRecord> classification;
  std::vector<SegmentationRecord> segmentation;
};

// One metric (AUC, Dice or IoU) broken down by cohort.
struct MetricBlock {
  std::string metric;
  double overall = 0.0;
  std::map<int, double> per_group;
  double worst_case = 0.0;
  double gap = 0.0;
  double equity_scaled = 0.0;
  std::optional<double> mean_psd;  // classification only, needs >= 2 groups
  std::optional<double> max_psd;
};

struct MetricsReport {
  Task task = Task::classification;
  std::vector<MetricBlock> blocks;

  const MetricBlock& block(const std::string& metric) const;
};

enum class EquityScaling {
  mean_discrepancy,  // ES-AUC
  sum_discrepancy,   // ES-Dice / ES-IoU
};

// Derives worst-case, gap, equity-scaled and (optionally) PSD values from an
// overall score and per-group scores.
MetricBlock summarize_groups(std::string metric, double overall, const std::map<int, double>& per_group,
                             EquityScaling scaling, bool with_psd);

MetricsReport report(const PredictionSet& preds, Task task);

}  // namespace fairdi
