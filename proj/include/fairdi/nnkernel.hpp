#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fairdi/rng.hpp"

namespace fairdi {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { relu, identity };

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::relu;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }

  bool operator==(const DenseLayer&) const = default;
};

// Feature extractor f_theta. A frozen net never receives gradients.
struct DenseNet {
  std::vector<DenseLayer> layers;
  bool frozen = false;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t param_count() const;
  // Throws shape_error on broken chaining, numeric_error on non-finite parameters.
  void validate() const;

  bool operator==(const DenseNet&) const = default;
};

// Linear classification layer h_{phi,tau}; probabilities are softmax(logits / temperature).
struct Head {
  Matrix weight;  // classes x features
  std::vector<double> bias;
  double temperature = 1.0;
  bool frozen = false;

  std::size_t feature_dim() const { return weight.cols; }
  std::size_t num_classes() const { return weight.rows; }
  void validate() const;

  bool operator==(const Head&) const = default;
};

// Mini-batch. Targets are class distributions so CutMix soft labels flow
// through unchanged; hard labels are one-hot rows.
struct Batch {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  std::vector<int> attributes;

  std::size_t size() const { return inputs.size(); }
};

struct ForwardResult {
  std::vector<double> features;
  std::vector<double> logits;
  std::vector<double> probs;
};

std::vector<double> softmax_temp(std::span<const double> logits, double tau = 1.0);

// -log p(true class) for a one-hot label, p clamped at 1e-12.
double cross_entropy(std::span<const double> probs, std::span<const double> one_hot);

// -sum_k t_k log p_k for an arbitrary target distribution (CutMix labels).
double soft_cross_entropy(std::span<const double> probs, std::span<const double> target);

std::vector<double> one_hot(int label, std::size_t classes);

std::vector<double> extract_features(const DenseNet& net, std::span<const double> x);
std::vector<double> apply_head(const Head& head, std::span<const double> features);
ForwardResult forward(const DenseNet& net, const Head& head, std::span<const double> x);

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

// Backbone gradients are empty when the net is frozen; head is nullopt when the head is frozen.
struct Gradients {
  std::vector<LayerGrad> backbone;
  std::optional<LayerGrad> head;
};

enum class LossKind { cross_entropy };

// Gradient of (1/N) sum_i w_i * loss_i with w held constant.
Gradients backward(const DenseNet& net, const Head& head, const Batch& batch,
                   std::span<const double> per_sample_weights, LossKind kind);

// Back-propagates caller-supplied dL/dlogits (one row per sample, already scaled).
Gradients backward_from_logit_grads(const DenseNet& net, const Head& head,
                                    const std::vector<std::vector<double>>& inputs,
                                    const std::vector<std::vector<double>>& logit_grads);

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

// SGD with heavy-ball momentum or Adam; weight decay is added to the gradient (L2).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const OptimizerConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::int64_t steps_ = 0;
};

// Applies one optimizer step to every non-frozen parameter of net and head.
void apply_gradients(Optimizer& optimizer, DenseNet& net, Head& head, const Gradients& grads);

// Hidden layers use ReLU; weights and biases uniform in +-1/sqrt(fan_in).
DenseNet make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, Rng& rng);
Head make_head(std::size_t feature_dim, std::size_t classes, Rng& rng, double temperature = 1.0);

// FNV-1a over the raw parameter bytes; used for freeze checks.
std::uint64_t parameter_hash(const DenseNet& net);
std::uint64_t parameter_hash(const Head& head);

}  // namespace fairdi
