#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

namespace fairdi {

// Synthetic biased benchmark. Group g gets difficulty t_g = bias * g / (G - 1):
// class-mean separation base * (1 - t_g), label-flip rate noise * (1 + t_g),
// a discriminative direction rotated by t_g * max_rotation away from the first
// axis, and a mean shift of t_g * group_shift along a third axis.
struct GenSpec {
  std::size_t n_samples = 20000;
  std::size_t n_features = 16;  // flat mode
  std::size_t image_side = 0;   // > 0 selects image mode (side x side grid)
  std::size_t n_groups = 2;
  std::vector<double> group_proportions{0.7, 0.3};
  double base_separation = 2.5;
  double bias_strength = 0.5;
  double label_noise = 0.05;
  double max_rotation = 1.5707963267948966;  // radians
  double group_shift = 1.0;
  std::uint64_t seed = 42;

  std::size_t input_dim() const { return image_side > 0 ? image_side * image_side : n_features; }
  void validate() const;
};

struct Sample {
  std::vector<double> features;
  int label = 0;
  int attribute = 0;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t image_side = 0;  // 0 for flat feature vectors
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

struct GroupOracle {
  int group = 0;
  std::size_t count = 0;
  double separation = 0.0;
  double flip_rate = 0.0;
  double rotation = 0.0;  // radians
  double shift = 0.0;
  double bayes_auc = 0.0;  // against the observed (noisy) labels
};

struct GeneratedData {
  Dataset dataset;
  std::vector<GroupOracle> oracle;
};

GeneratedData generate(const GenSpec& spec);

// rho + (1 - 2 rho) * Phi(separation / sqrt 2) for unit-variance classes.
double bayes_auc(double separation, double flip_rate);

// Bayes-optimal within-group score: projection on the group's discriminative direction.
double analytic_score(const GenSpec& spec, const Sample& sample);

// CSV with columns f0..f{D-1} (or px{r}_{c} in image mode), label, attribute.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json spec_to_json(const GenSpec& spec);
GenSpec spec_from_json(const nlohmann::json& j, GenSpec base = {});
nlohmann::json oracle_to_json(const std::vector<GroupOracle>& oracle);

}  // namespace fairdi
