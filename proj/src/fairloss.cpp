#include "fairdi/fairloss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "fairdi/error.hpp"

namespace fairdi {
namespace {

void check_losses(std::span<const double> losses) {
  if (losses.empty()) throw Error(ErrorCode::empty_batch, "no losses in batch");
  for (const double l : losses) {
    if (!std::isfinite(l)) throw Error(ErrorCode::numeric_error, "non-finite per-sample loss");
  }
}

// exp(x_i - max x), returned unnormalised together with its sum.
std::vector<double> shifted_exp(std::span<const double> x, double& sum) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - m);
    sum += e[i];
  }
  return e;
}

}  // namespace

void FisConfig::validate() const {
  if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorCode::invalid_parameter, "FIS mixing c must lie in [0,1]");
}

std::vector<double> individual_weights(std::span<const double> batch_losses) {
  check_losses(batch_losses);
  double sum = 0.0;
  std::vector<double> w = shifted_exp(batch_losses, sum);
  for (double& v : w) v /= sum;
  return w;
}

double wasserstein1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::empty_distribution, "W1 of an empty distribution");
  for (const double v : a) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_input, "non-finite value in distribution");
  }
  for (const double v : b) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_input, "non-finite value in distribution");
  }
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  // Integrate |F_a^-1(u) - F_b^-1(u)| over u in [0,1]. Quantile breakpoints
  // sit at multiples of 1/m and 1/n; in units of 1/(m n) they are integers.
  const std::uint64_t m = sa.size();
  const std::uint64_t n = sb.size();
  std::uint64_t pos = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double total = 0.0;
  while (i < m && j < n) {
    const std::uint64_t next_a = (i + 1) * n;
    const std::uint64_t next_b = (j + 1) * m;
    const std::uint64_t next = std::min(next_a, next_b);
    total += std::abs(sa[i] - sb[j]) * static_cast<double>(next - pos);
    pos = next;
    if (next == next_a) ++i;
    if (next == next_b) ++j;
  }
  return total / static_cast<double>(m * n);
}

double wasserstein1d(const LossDistribution& a, const LossDistribution& b) { return wasserstein1d(a.values, b.values); }

std::map<int, double> group_weights(std::span<const double> losses, std::span<const int> attributes,
                                    const std::set<int>& groups) {
  check_losses(losses);
  if (attributes.size() != losses.size()) throw Error(ErrorCode::shape_error, "attributes do not match losses");
  std::map<int, std::vector<double>> by_group;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (groups.count(attributes[i])) by_group[attributes[i]].push_back(losses[i]);
  }
  std::map<int, double> out;
  if (by_group.empty()) return out;

  std::vector<double> distances;
  distances.reserve(by_group.size());
  for (const auto& [g, values] : by_group) distances.push_back(wasserstein1d(losses, values));
  double sum = 0.0;
  const std::vector<double> e = shifted_exp(distances, sum);
  std::size_t k = 0;
  for (const auto& entry : by_group) out[entry.first] = e[k++] / sum;
  return out;
}

std::map<int, double> group_weights(std::span<const double> losses, std::span<const int> attributes) {
  return group_weights(losses, attributes, std::set<int>(attributes.begin(), attributes.end()));
}

std::vector<double> fis_raw_weights(std::span<const double> losses, std::span<const int> attributes, double c) {
  FisConfig{c, WeightRescale::sum_to_n}.validate();
  const std::vector<double> s_ind = individual_weights(losses);
  const std::map<int, double> s_grp = group_weights(losses, attributes);
  std::vector<double> w(losses.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (1.0 - c) * s_ind[i] + c * s_grp.at(attributes[i]);
  return w;
}

std::vector<double> fis_weights(std::span<const double> losses, std::span<const int> attributes,
                                const FisConfig& cfg) {
  cfg.validate();
  check_losses(losses);
  if (attributes.size() != losses.size()) throw Error(ErrorCode::shape_error, "attributes do not match losses");
  const double c = cfg.c;
  const std::map<int, double> s_grp = group_weights(losses, attributes);

  // With s^I_i = e_i / S the normalised weight is
  //   ((1-c) e_i + c g_i S) / (S ((1-c) + c G)),  G = sum_i g_i,
  // which keeps c = 0 with equal losses at exactly 1 (sum_to_n).
  double s = 0.0;
  const std::vector<double> e = shifted_exp(losses, s);
  double g_total = 0.0;
  for (const int a : attributes) g_total += s_grp.at(a);
  const double denom = s * ((1.0 - c) + c * g_total);
  const double scale = cfg.weight_rescale == WeightRescale::sum_to_n ? static_cast<double>(losses.size()) : 1.0;

  std::vector<double> w(losses.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = scale * ((1.0 - c) * e[i] + c * s_grp.at(attributes[i]) * s) / denom;
  }
  return w;
}

FisLossResult fis_loss(const Batch& batch, const DenseNet& net, const Head& head, const FisConfig& cfg) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::empty_batch, "fis_loss on empty batch");
  if (batch.targets.size() != n || batch.attributes.size() != n) {
    throw Error(ErrorCode::shape_error, "batch targets/attributes do not match inputs");
  }
  FisLossResult r;
  r.sample_losses.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ForwardResult f = forward(net, head, batch.inputs[i]);
    r.sample_losses[i] = soft_cross_entropy(f.probs, batch.targets[i]);
    if (!std::isfinite(r.sample_losses[i])) {
      throw Error(ErrorCode::numeric_error, "NaN loss for sample " + std::to_string(i));
    }
  }
  r.weights = fis_weights(r.sample_losses, batch.attributes, cfg);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += r.weights[i] * r.sample_losses[i];
  r.loss = sum / static_cast<double>(n);
  return r;
}

Gradients fis_gradients(const Batch& batch, const DenseNet& net, const Head& head, std::span<const double> weights) {
  return backward(net, head, batch, weights, LossKind::cross_entropy);
}

}  // namespace fairdi
