#include "fairdi/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fairdi/error.hpp"

namespace fairdi {
namespace {

constexpr double kProbFloor = 1e-12;

void check_distribution(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (const double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::invalid_input, std::string(name) + " has invalid mass");
    sum += v;
  }
  if (p.empty() || std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::invalid_input, std::string(name) + " does not sum to 1");
  }
}

struct Evaluation {
  StudentLossResult result;
  std::vector<std::vector<double>> logit_grads;
};

Evaluation evaluate(const Batch& batch, const DenseNet& backbone, const Head& student,
                    const std::map<int, Head>& teachers, const DistillConfig& cfg, bool want_grads) {
  cfg.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::empty_batch, "student_loss on empty batch");
  if (batch.targets.size() != n || batch.attributes.size() != n) {
    throw Error(ErrorCode::shape_error, "batch targets/attributes do not match inputs");
  }
  for (const int a : batch.attributes) {
    if (!teachers.count(a)) {
      throw Error(ErrorCode::configuration, "no teacher head for attribute " + std::to_string(a));
    }
  }

  const double student_tau = cfg.temp_on_student ? cfg.tau : student.temperature;
  Evaluation ev;
  StudentLossResult& r = ev.result;
  r.kl.resize(n);
  r.sample_losses.resize(n);
  std::vector<std::vector<double>> ce_probs(n);
  std::vector<std::vector<double>> kl_student(n);
  std::vector<std::vector<double>> kl_teacher(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> feats = extract_features(backbone, batch.inputs[i]);
    const std::vector<double> z = apply_head(student, feats);
    const Head& teacher = teachers.at(batch.attributes[i]);
    const std::vector<double> teacher_probs = softmax_temp(apply_head(teacher, feats), cfg.tau);

    ce_probs[i] = softmax_temp(z, student.temperature);
    kl_student[i] = student_tau == student.temperature ? ce_probs[i] : softmax_temp(z, student_tau);
    r.kl[i] = cfg.kl_direction == KlDirection::student_first ? kl_divergence(kl_student[i], teacher_probs)
                                                              : kl_divergence(teacher_probs, kl_student[i]);
    r.sample_losses[i] = soft_cross_entropy(ce_probs[i], batch.targets[i]);
    if (!std::isfinite(r.sample_losses[i]) || !std::isfinite(r.kl[i])) {
      throw Error(ErrorCode::numeric_error, "NaN loss for sample " + std::to_string(i));
    }
    kl_teacher[i] = teacher_probs;
  }

  r.weights = fis_weights(r.sample_losses, batch.attributes, cfg.fis);
  const double lambda = cfg.lambda;
  const double tau = cfg.tau;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += lambda * tau * tau * r.kl[i] + (1.0 - lambda) * r.weights[i] * r.sample_losses[i];
  }
  r.loss = sum / static_cast<double>(n);

  if (!want_grads) return ev;

  const double inv_n = 1.0 / static_cast<double>(n);
  ev.logit_grads.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double>& p = ce_probs[i];
    const std::vector<double>& s = kl_student[i];
    const std::vector<double>& t = kl_teacher[i];
    const std::vector<double>& y = batch.targets[i];
    std::vector<double> dz(p.size());
    const double ce_scale = (1.0 - lambda) * r.weights[i] * inv_n / student.temperature;
    const double kl_scale = lambda * tau * tau * inv_n / student_tau;
    for (std::size_t k = 0; k < p.size(); ++k) {
      double dkl;
      if (cfg.kl_direction == KlDirection::student_first) {
        dkl = s[k] > 0.0 ? s[k] * (std::log(s[k]) - std::log(std::max(t[k], kProbFloor)) - r.kl[i]) : 0.0;
      } else {
        dkl = s[k] - t[k];
      }
      dz[k] = ce_scale * (p[k] - y[k]) + kl_scale * dkl;
    }
    ev.logit_grads[i] = std::move(dz);
  }
  return ev;
}

}  // namespace

void DistillConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::invalid_parameter, "lambda must lie in [0,1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::invalid_parameter, "tau must be positive");
  fis.validate();
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::invalid_input, "KL operands differ in size");
  check_distribution(p, "p");
  check_distribution(q, "q");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(std::max(q[k], kProbFloor)));
  }
  return std::max(kl, 0.0);
}

double distillation_term(std::span<const double> student_probs, std::span<const double> teacher_probs,
                         const DistillConfig& cfg) {
  cfg.validate();
  const double kl = cfg.kl_direction == KlDirection::student_first ? kl_divergence(student_probs, teacher_probs)
                                                                    : kl_divergence(teacher_probs, student_probs);
  return cfg.lambda * cfg.tau * cfg.tau * kl;
}

StudentLossResult student_loss(const Batch& batch, const DenseNet& backbone, const Head& student,
                               const std::map<int, Head>& teachers, const DistillConfig& cfg) {
  return evaluate(batch, backbone, student, teachers, cfg, false).result;
}

Gradients student_gradients(const Batch& batch, const DenseNet& backbone, const Head& student,
                            const std::map<int, Head>& teachers, const DistillConfig& cfg) {
  if (!backbone.frozen) throw Error(ErrorCode::configuration, "student training requires a frozen backbone");
  Evaluation ev = evaluate(batch, backbone, student, teachers, cfg, true);
  return backward_from_logit_grads(backbone, student, batch.inputs, ev.logit_grads);
}

}  // namespace fairdi
