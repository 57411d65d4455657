#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fairdi/nnkernel.hpp"

namespace fairdi {

// How the mixed weights w_i are normalised before entering (1/N) sum w_i l_i.
enum class WeightRescale {
  sum_to_n,    // mean weight 1, so the objective is on the same scale as plain CE
  sum_to_one,  // raw convex weights renormalised to a distribution
};

struct FisConfig {
  double c = 0.5;  // 0: individual scaling only, 1: group scaling only
  WeightRescale weight_rescale = WeightRescale::sum_to_n;

  void validate() const;
};

// Empirical distribution of per-sample losses, optionally tagged with its cohort.
struct LossDistribution {
  std::vector<double> values;
  std::optional<int> group_id;
};

// s^I: softmax over the batch losses.
std::vector<double> individual_weights(std::span<const double> batch_losses);

// Exact 1-Wasserstein distance between two uniform empirical distributions.
double wasserstein1d(std::span<const double> a, std::span<const double> b);
double wasserstein1d(const LossDistribution& a, const LossDistribution& b);

// s^G: softmax over groups of W1(all losses, group losses). Groups in
// `groups` that have no sample in the batch are dropped.
std::map<int, double> group_weights(std::span<const double> losses, std::span<const int> attributes,
                                    const std::set<int>& groups);
std::map<int, double> group_weights(std::span<const double> losses, std::span<const int> attributes);

// (1 - c) s^I_i + c s^G(a_i), before rescaling.
std::vector<double> fis_raw_weights(std::span<const double> losses, std::span<const int> attributes, double c);

// Raw weights rescaled per cfg.weight_rescale.
std::vector<double> fis_weights(std::span<const double> losses, std::span<const int> attributes,
                                const FisConfig& cfg);

struct FisLossResult {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> sample_losses;
};

// (1/N) sum_i w_i l_i with w computed from the current batch losses.
FisLossResult fis_loss(const Batch& batch, const DenseNet& net, const Head& head, const FisConfig& cfg);

// Gradient of fis_loss with the weights held fixed (stop-gradient).
Gradients fis_gradients(const Batch& batch, const DenseNet& net, const Head& head, std::span<const double> weights);

}  // namespace fairdi
