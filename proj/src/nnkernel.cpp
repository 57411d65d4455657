#include "fairdi/nnkernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "fairdi/error.hpp"

namespace fairdi {
namespace {

constexpr double kProbFloor = 1e-12;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_layer(const Matrix& w, const std::vector<double>& b, const std::string& what) {
  if (w.data.size() != w.rows * w.cols || b.size() != w.rows) {
    throw Error(ErrorCode::shape_error, what + ": weight/bias shapes disagree");
  }
  if (!all_finite(w.data) || !all_finite(b)) {
    throw Error(ErrorCode::numeric_error, what + ": non-finite parameter");
  }
}

// y = W x + b
void affine(const Matrix& w, const std::vector<double>& b, std::span<const double> x, std::vector<double>& y) {
  y.assign(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.data[r * w.cols];
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Per-sample forward trace kept for back-propagation.
struct Trace {
  std::vector<std::vector<double>> activations;  // activations[0] = x, activations[l+1] = output of layer l
  std::vector<std::vector<double>> pre;          // pre-activations per layer
  std::vector<double> logits;
};

Trace trace_forward(const DenseNet& net, const Head& head, std::span<const double> x) {
  if (!net.layers.empty() && x.size() != net.input_dim()) {
    throw Error(ErrorCode::shape_error, "input has dimension " + std::to_string(x.size()) + ", net expects " +
                                            std::to_string(net.input_dim()));
  }
  Trace t;
  t.activations.reserve(net.layers.size() + 1);
  t.pre.reserve(net.layers.size());
  t.activations.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    std::vector<double> z;
    affine(layer.weight, layer.bias, t.activations.back(), z);
    std::vector<double> a = z;
    if (layer.activation == Activation::relu) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    }
    if (!all_finite(a)) {
      throw Error(ErrorCode::numeric_error, "non-finite activation at layer " + std::to_string(l));
    }
    t.pre.push_back(std::move(z));
    t.activations.push_back(std::move(a));
  }
  if (t.activations.back().size() != head.feature_dim()) {
    throw Error(ErrorCode::shape_error, "feature dimension " + std::to_string(t.activations.back().size()) +
                                            " does not match head input " + std::to_string(head.feature_dim()));
  }
  affine(head.weight, head.bias, t.activations.back(), t.logits);
  if (!all_finite(t.logits)) {
    throw Error(ErrorCode::numeric_error, "non-finite activation at layer " + std::to_string(net.layers.size()));
  }
  return t;
}

}  // namespace

std::size_t DenseNet::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

std::size_t DenseNet::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.data.size() + layer.bias.size();
  return n;
}

void DenseNet::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_layer(layers[l].weight, layers[l].bias, "layer " + std::to_string(l));
    if (l > 0 && layers[l].in_dim() != layers[l - 1].out_dim()) {
      throw Error(ErrorCode::shape_error, "layer " + std::to_string(l) + " input " +
                                              std::to_string(layers[l].in_dim()) + " != previous output " +
                                              std::to_string(layers[l - 1].out_dim()));
    }
  }
}

void Head::validate() const {
  check_layer(weight, bias, "head");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::invalid_parameter, "head temperature must be positive");
  }
}

std::vector<double> softmax_temp(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::invalid_parameter, "temperature must be positive and finite");
  }
  if (logits.empty()) throw Error(ErrorCode::invalid_input, "softmax of empty logits");
  if (!all_finite(logits)) throw Error(ErrorCode::invalid_input, "non-finite logit");
  std::vector<double> out(logits.size());
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] / tau;
    max_scaled = std::max(max_scaled, out[i]);
  }
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - max_scaled);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

double cross_entropy(std::span<const double> probs, std::span<const double> label) {
  if (label.size() != probs.size()) throw Error(ErrorCode::invalid_input, "label size does not match probabilities");
  std::size_t hot = 0;
  std::size_t hot_index = 0;
  for (std::size_t k = 0; k < label.size(); ++k) {
    if (label[k] == 1.0) {
      ++hot;
      hot_index = k;
    } else if (label[k] != 0.0) {
      throw Error(ErrorCode::invalid_input, "label is not one-hot");
    }
  }
  if (hot != 1) throw Error(ErrorCode::invalid_input, "label must have exactly one hot entry");
  return -std::log(std::max(probs[hot_index], kProbFloor));
}

double soft_cross_entropy(std::span<const double> probs, std::span<const double> target) {
  if (target.size() != probs.size()) throw Error(ErrorCode::invalid_input, "target size does not match probabilities");
  double total = 0.0;
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (!(target[k] >= 0.0)) throw Error(ErrorCode::invalid_input, "negative target mass");
    total += target[k];
    if (target[k] > 0.0) loss -= target[k] * std::log(std::max(probs[k], kProbFloor));
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::invalid_input, "target does not sum to 1");
  return loss;
}

std::vector<double> one_hot(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw Error(ErrorCode::invalid_input, "label " + std::to_string(label) + " out of range");
  }
  std::vector<double> v(classes, 0.0);
  v[static_cast<std::size_t>(label)] = 1.0;
  return v;
}

std::vector<double> extract_features(const DenseNet& net, std::span<const double> x) {
  if (!net.layers.empty() && x.size() != net.input_dim()) {
    throw Error(ErrorCode::shape_error, "input has dimension " + std::to_string(x.size()) + ", net expects " +
                                            std::to_string(net.input_dim()));
  }
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    affine(layer.weight, layer.bias, cur, next);
    if (layer.activation == Activation::relu) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    if (!all_finite(next)) {
      throw Error(ErrorCode::numeric_error, "non-finite activation at layer " + std::to_string(l));
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<double> apply_head(const Head& head, std::span<const double> features) {
  if (features.size() != head.feature_dim()) {
    throw Error(ErrorCode::shape_error, "feature dimension " + std::to_string(features.size()) +
                                            " does not match head input " + std::to_string(head.feature_dim()));
  }
  std::vector<double> logits;
  affine(head.weight, head.bias, features, logits);
  return logits;
}

ForwardResult forward(const DenseNet& net, const Head& head, std::span<const double> x) {
  ForwardResult r;
  r.features = extract_features(net, x);
  r.logits = apply_head(head, r.features);
  r.probs = softmax_temp(r.logits, head.temperature);
  return r;
}

Gradients backward(const DenseNet& net, const Head& head, const Batch& batch,
                   std::span<const double> per_sample_weights, LossKind kind) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::empty_batch, "backward on empty batch");
  if (per_sample_weights.size() != n || batch.targets.size() != n) {
    throw Error(ErrorCode::shape_error, "per-sample weights/targets do not match batch size");
  }
  if (!all_finite(per_sample_weights)) throw Error(ErrorCode::invalid_input, "non-finite sample weight");

  std::vector<std::vector<double>> logit_grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case LossKind::cross_entropy: {
        std::vector<double> logits = apply_head(head, extract_features(net, batch.inputs[i]));
        const std::vector<double> p = softmax_temp(logits, head.temperature);
        const auto& t = batch.targets[i];
        if (t.size() != p.size()) throw Error(ErrorCode::shape_error, "target size does not match classes");
        const double scale = per_sample_weights[i] / static_cast<double>(n) / head.temperature;
        for (std::size_t k = 0; k < p.size(); ++k) logits[k] = scale * (p[k] - t[k]);
        logit_grads[i] = std::move(logits);
        break;
      }
    }
  }
  return backward_from_logit_grads(net, head, batch.inputs, logit_grads);
}

Gradients backward_from_logit_grads(const DenseNet& net, const Head& head,
                                    const std::vector<std::vector<double>>& inputs,
                                    const std::vector<std::vector<double>>& logit_grads) {
  if (inputs.empty()) throw Error(ErrorCode::empty_batch, "backward on empty batch");
  if (logit_grads.size() != inputs.size()) throw Error(ErrorCode::shape_error, "logit gradient count mismatch");

  Gradients g;
  const bool need_backbone = !net.frozen && !net.layers.empty();
  if (!head.frozen) g.head = LayerGrad{Matrix(head.weight.rows, head.weight.cols), std::vector<double>(head.bias.size())};
  if (need_backbone) {
    g.backbone.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
      g.backbone.push_back(LayerGrad{Matrix(layer.weight.rows, layer.weight.cols),
                                     std::vector<double>(layer.bias.size())});
    }
  }
  if (!g.head && !need_backbone) return g;

  std::vector<double> delta;
  std::vector<double> upstream;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::vector<double>& dz = logit_grads[i];
    if (dz.size() != head.num_classes()) throw Error(ErrorCode::shape_error, "logit gradient has wrong size");

    if (!need_backbone) {
      const std::vector<double> feats = extract_features(net, inputs[i]);
      for (std::size_t r = 0; r < head.weight.rows; ++r) {
        g.head->bias[r] += dz[r];
        double* row = &g.head->weight.data[r * head.weight.cols];
        for (std::size_t c = 0; c < head.weight.cols; ++c) row[c] += dz[r] * feats[c];
      }
      continue;
    }

    const Trace t = trace_forward(net, head, inputs[i]);
    const std::vector<double>& feats = t.activations.back();
    if (g.head) {
      for (std::size_t r = 0; r < head.weight.rows; ++r) {
        g.head->bias[r] += dz[r];
        double* row = &g.head->weight.data[r * head.weight.cols];
        for (std::size_t c = 0; c < head.weight.cols; ++c) row[c] += dz[r] * feats[c];
      }
    }
    // dL/d(features) = W_head^T dz
    upstream.assign(head.weight.cols, 0.0);
    for (std::size_t r = 0; r < head.weight.rows; ++r) {
      const double* row = &head.weight.data[r * head.weight.cols];
      for (std::size_t c = 0; c < head.weight.cols; ++c) upstream[c] += row[c] * dz[r];
    }
    for (std::size_t l = net.layers.size(); l-- > 0;) {
      const DenseLayer& layer = net.layers[l];
      delta = upstream;
      if (layer.activation == Activation::relu) {
        for (std::size_t k = 0; k < delta.size(); ++k) {
          if (!(t.pre[l][k] > 0.0)) delta[k] = 0.0;
        }
      }
      const std::vector<double>& a_in = t.activations[l];
      LayerGrad& lg = g.backbone[l];
      for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        lg.bias[r] += delta[r];
        double* row = &lg.weight.data[r * layer.weight.cols];
        for (std::size_t c = 0; c < layer.weight.cols; ++c) row[c] += delta[r] * a_in[c];
      }
      if (l == 0) break;
      upstream.assign(layer.weight.cols, 0.0);
      for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        const double* row = &layer.weight.data[r * layer.weight.cols];
        for (std::size_t c = 0; c < layer.weight.cols; ++c) upstream[c] += row[c] * delta[r];
      }
    }
  }
  return g;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::invalid_parameter, "learning rate must be positive");
  }
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::invalid_parameter, "weight decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::invalid_parameter, "momentum must be in [0,1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::invalid_parameter, "Adam betas must be in [0,1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_parameter, "epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw Error(ErrorCode::shape_error, "parameter/gradient tensor count mismatch");
  if (first_.empty() && steps_ == 0) {
    first_.resize(params.size());
    second_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_[i].assign(params[i].size(), 0.0);
      if (config_.kind == OptimizerKind::adam) second_[i].assign(params[i].size(), 0.0);
    }
  }
  if (first_.size() != params.size()) throw Error(ErrorCode::shape_error, "optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || first_[i].size() != params[i].size()) {
      throw Error(ErrorCode::shape_error, "tensor " + std::to_string(i) + " shape mismatch");
    }
  }

  ++steps_;
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;
  if (config_.kind == OptimizerKind::sgd_momentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::span<double> p = params[i];
      std::span<const double> g = grads[i];
      std::vector<double>& v = first_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j] + wd * p[j];
        v[j] = config_.momentum * v[j] + gj;
        p[j] -= lr * v[j];
      }
    }
    return;
  }

  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i];
    std::span<const double> g = grads[i];
    std::vector<double>& m = first_[i];
    std::vector<double>& v = second_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] + wd * p[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void apply_gradients(Optimizer& optimizer, DenseNet& net, Head& head, const Gradients& grads) {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> views;
  if (!net.frozen && !net.layers.empty()) {
    if (grads.backbone.size() != net.layers.size()) throw Error(ErrorCode::shape_error, "missing backbone gradients");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      params.emplace_back(net.layers[l].weight.data);
      params.emplace_back(net.layers[l].bias);
      views.emplace_back(grads.backbone[l].weight.data);
      views.emplace_back(grads.backbone[l].bias);
    }
  }
  if (!head.frozen) {
    if (!grads.head) throw Error(ErrorCode::shape_error, "missing head gradients");
    params.emplace_back(head.weight.data);
    params.emplace_back(head.bias);
    views.emplace_back(grads.head->weight.data);
    views.emplace_back(grads.head->bias);
  }
  optimizer.step(params, views);
}

DenseNet make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, Rng& rng) {
  if (input_dim == 0) throw Error(ErrorCode::invalid_parameter, "input dimension must be positive");
  DenseNet net;
  std::size_t in = input_dim;
  for (const std::size_t out : hidden) {
    if (out == 0) throw Error(ErrorCode::invalid_parameter, "hidden width must be positive");
    DenseLayer layer{Matrix(out, in), std::vector<double>(out), Activation::relu};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

Head make_head(std::size_t feature_dim, std::size_t classes, Rng& rng, double temperature) {
  if (feature_dim == 0 || classes == 0) throw Error(ErrorCode::invalid_parameter, "head dimensions must be positive");
  Head head{Matrix(classes, feature_dim), std::vector<double>(classes), temperature, false};
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (double& w : head.weight.data) w = rng.uniform(-bound, bound);
  for (double& b : head.bias) b = rng.uniform(-bound, bound);
  head.validate();
  return head;
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void hash_matrix(std::uint64_t& h, const Matrix& m, const std::vector<double>& bias) {
  const std::uint64_t dims[2] = {m.rows, m.cols};
  hash_bytes(h, dims, sizeof(dims));
  hash_bytes(h, m.data.data(), m.data.size() * sizeof(double));
  hash_bytes(h, bias.data(), bias.size() * sizeof(double));
}

}  // namespace

std::uint64_t parameter_hash(const DenseNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : net.layers) hash_matrix(h, layer.weight, layer.bias);
  return h;
}

std::uint64_t parameter_hash(const Head& head) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_matrix(h, head.weight, head.bias);
  hash_bytes(h, &head.temperature, sizeof(double));
  return h;
}

}  // namespace fairdi
