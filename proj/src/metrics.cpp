#include "fairdi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fairdi/error.hpp"

namespace fairdi {
namespace {

void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::invalid_input, "scores and labels differ in length");
  for (const double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::invalid_input, "non-finite score");
  }
  for (const int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::invalid_input, "labels must be binary");
  }
}

void check_groups(const std::map<int, double>& per_group) {
  if (per_group.empty()) throw Error(ErrorCode::invalid_input, "no group values");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_scores(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::undefined_metric, "AUC needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (doubled, hence integral) mid-ranks of the positives.
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t mid_x2 = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_x2 += mid_x2;
    }
    i = j;
  }
  const double u_x2 = static_cast<double>(rank_sum_x2 - n_pos * (n_pos + 1));
  return u_x2 / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_scores(scores, labels);
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::undefined_metric, "ROC needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0.0;
  double fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    pts.push_back({thr, fp / n_neg, tp / n_pos});
  }
  return pts;
}

double es_auc(double overall, const std::map<int, double>& per_group) {
  check_groups(per_group);
  double discrepancy = 0.0;
  for (const auto& [g, v] : per_group) discrepancy += std::abs(overall - v);
  return overall / (1.0 + discrepancy / static_cast<double>(per_group.size()));
}

Psd psd(double overall, const std::map<int, double>& per_group) {
  if (per_group.size() < 2) throw Error(ErrorCode::invalid_input, "PSD needs at least two groups");
  if (overall == 0.0) throw Error(ErrorCode::undefined_metric, "PSD undefined for overall score 0");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [g, v] : per_group) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  double stdev;
  if (per_group.size() == 2) {
    // The population std of two points is half their distance.
    stdev = range / 2.0;
  } else {
    double mean = 0.0;
    for (const auto& [g, v] : per_group) mean += v;
    mean /= static_cast<double>(per_group.size());
    double ss = 0.0;
    for (const auto& [g, v] : per_group) ss += (v - mean) * (v - mean);
    stdev = std::sqrt(ss / static_cast<double>(per_group.size()));
  }
  return Psd{stdev / overall, range / overall};
}

double es_overlap(double overall, const std::map<int, double>& per_group) {
  check_groups(per_group);
  double delta = 0.0;
  for (const auto& [g, v] : per_group) delta += std::abs(overall - v);
  return overall / (1.0 + delta);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p != 0; }));
}

namespace {

struct Overlap {
  std::size_t truth = 0;
  std::size_t pred = 0;
  std::size_t both = 0;
};

Overlap overlap(const Mask& truth, const Mask& pred) {
  if (truth.height != pred.height || truth.width != pred.width || truth.pixels.size() != pred.pixels.size() ||
      truth.pixels.size() != truth.height * truth.width) {
    throw Error(ErrorCode::shape_error, "mask shapes differ");
  }
  Overlap o;
  for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
    const bool t = truth.pixels[i] != 0;
    const bool p = pred.pixels[i] != 0;
    o.truth += t;
    o.pred += p;
    o.both += t && p;
  }
  return o;
}

}  // namespace

double dice(const Mask& truth, const Mask& pred) {
  const Overlap o = overlap(truth, pred);
  if (o.truth + o.pred == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.truth + o.pred);
}

double iou(const Mask& truth, const Mask& pred) {
  const Overlap o = overlap(truth, pred);
  const std::size_t uni = o.truth + o.pred - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

const MetricBlock& MetricsReport::block(const std::string& metric) const {
  for (const auto& b : blocks) {
    if (b.metric == metric) return b;
  }
  throw Error(ErrorCode::invalid_input, "report has no metric '" + metric + "'");
}

MetricBlock summarize_groups(std::string metric, double overall, const std::map<int, double>& per_group,
                             EquityScaling scaling, bool with_psd) {
  check_groups(per_group);
  MetricBlock b;
  b.metric = std::move(metric);
  b.overall = overall;
  b.per_group = per_group;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [g, v] : per_group) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  b.worst_case = lo;
  b.gap = hi - lo;
  b.equity_scaled = scaling == EquityScaling::mean_discrepancy ? es_auc(overall, per_group)
                                                                : es_overlap(overall, per_group);
  if (with_psd && per_group.size() >= 2) {
    const Psd p = psd(overall, per_group);
    b.mean_psd = p.mean_psd;
    b.max_psd = p.max_psd;
  }
  return b;
}

MetricsReport report(const PredictionSet& preds, Task task) {
  MetricsReport r;
  r.task = task;
  if (task == Task::classification) {
    const auto& recs = preds.classification;
    if (recs.empty()) throw Error(ErrorCode::invalid_input, "empty prediction set");
    std::vector<double> scores;
    std::vector<int> labels;
    std::map<int, std::pair<std::vector<double>, std::vector<int>>> groups;
    for (const auto& rec : recs) {
      scores.push_back(rec.score);
      labels.push_back(rec.label);
      auto& [gs, gl] = groups[rec.attribute];
      gs.push_back(rec.score);
      gl.push_back(rec.label);
    }
    const double overall = auc(scores, labels);
    std::map<int, double> per_group;
    for (const auto& [g, data] : groups) {
      try {
        per_group[g] = auc(data.first, data.second);
      } catch (const Error&) {
        throw Error(ErrorCode::undefined_metric, "group " + std::to_string(g) + ": AUC needs both classes present");
      }
    }
    r.blocks.push_back(summarize_groups("auc", overall, per_group, EquityScaling::mean_discrepancy, true));
    return r;
  }

  const auto& recs = preds.segmentation;
  if (recs.empty()) throw Error(ErrorCode::invalid_input, "empty prediction set");
  double dice_sum = 0.0;
  double iou_sum = 0.0;
  std::map<int, std::pair<double, double>> group_sums;
  std::map<int, std::size_t> group_counts;
  for (const auto& rec : recs) {
    const double d = dice(rec.truth, rec.pred);
    const double j = iou(rec.truth, rec.pred);
    dice_sum += d;
    iou_sum += j;
    group_sums[rec.attribute].first += d;
    group_sums[rec.attribute].second += j;
    ++group_counts[rec.attribute];
  }
  const double n = static_cast<double>(recs.size());
  std::map<int, double> dice_groups;
  std::map<int, double> iou_groups;
  for (const auto& [g, sums] : group_sums) {
    const double cnt = static_cast<double>(group_counts[g]);
    dice_groups[g] = sums.first / cnt;
    iou_groups[g] = sums.second / cnt;
  }
  r.blocks.push_back(summarize_groups("dice", dice_sum / n, dice_groups, EquityScaling::sum_discrepancy, false));
  r.blocks.push_back(summarize_groups("iou", iou_sum / n, iou_groups, EquityScaling::sum_discrepancy, false));
  return r;
}

}  // namespace fairdi
