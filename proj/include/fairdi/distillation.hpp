#pragma once

#include <map>
#include <span>
#include <vector>

#include "fairdi/fairloss.hpp"
#include "fairdi/nnkernel.hpp"

namespace fairdi {

enum class KlDirection {
  student_first,  // KL[student || teacher], the order written in the objective
  teacher_first,  // KL[teacher || student], the classical distillation order
};

struct DistillConfig {
  double lambda = 0.95;
  double tau = 1.5;
  FisConfig fis{0.5, WeightRescale::sum_to_n};
  KlDirection kl_direction = KlDirection::student_first;
  bool temp_on_student = false;  // also soften the student with tau in the KL term

  void validate() const;
};

// sum_k p_k log(p_k / q_k) with 0 log 0 = 0 and q clamped at 1e-12.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// lambda * tau^2 * KL for one sample, in the configured direction.
double distillation_term(std::span<const double> student_probs, std::span<const double> teacher_probs,
                         const DistillConfig& cfg);

struct StudentLossResult {
  double loss = 0.0;
  std::vector<double> weights;         // FIS weights w_i
  std::vector<double> kl;              // per-sample KL (without lambda tau^2)
  std::vector<double> sample_losses;   // per-sample cross-entropy of the student
};

// Each sample is distilled from the teacher of its own attribute. Teacher
// outputs are constants; the student probabilities in the KL use tau only
// when cfg.temp_on_student is set, while the cross-entropy always uses tau=1.
StudentLossResult student_loss(const Batch& batch, const DenseNet& backbone, const Head& student,
                               const std::map<int, Head>& teachers, const DistillConfig& cfg);

// Gradient of student_loss with respect to the student head only. The
// backbone must be frozen.
Gradients student_gradients(const Batch& batch, const DenseNet& backbone, const Head& student,
                            const std::map<int, Head>& teachers, const DistillConfig& cfg);

}  // namespace fairdi
