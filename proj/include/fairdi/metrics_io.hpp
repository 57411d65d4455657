#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairdi/metrics.hpp"

namespace fairdi {

// Classification predictions CSV: id,score,label,attribute.
std::vector<ClassificationRecord> load_classification_predictions(const std::filesystem::path& path);
void save_classification_predictions(const std::vector<ClassificationRecord>& recs, const std::filesystem::path& path);

// Pre-aggregated group scores CSV: task,overall,group,value (one row per
// group), with an optional metric column (auc, dice or iou; default auc).
struct GroupValues {
  std::string task;
  std::string metric = "auc";
  double overall = 0.0;
  std::map<int, double> per_group;
};
std::vector<GroupValues> load_group_values(const std::filesystem::path& path);

// Binary masks: PGM (P2 or P5, nonzero = foreground) or run-length CSV
// ("height,width" header line, then "start,length" runs over row-major indices).
Mask load_mask(const std::filesystem::path& path);
void save_mask_pgm(const Mask& mask, const std::filesystem::path& path);
void save_mask_rle(const Mask& mask, const std::filesystem::path& path);

// Segmentation index CSV: id,pred_path,truth_path,attribute. Relative paths
// resolve against the index file's directory.
std::vector<SegmentationRecord> load_segmentation_index(const std::filesystem::path& path);

nlohmann::json block_to_json(const MetricBlock& block);
nlohmann::json report_to_json(const MetricsReport& report);

// Column layout of the result tables: overall, worst-case, equity-scaled,
// gap, PSD, then one column per cohort.
std::string report_to_csv(const MetricsReport& report);

// ROC vertices for the pooled set ("all") and for each cohort with both classes.
std::string roc_points_csv(const std::vector<ClassificationRecord>& recs);

}  // namespace fairdi
