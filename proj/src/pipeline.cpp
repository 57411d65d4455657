#include "fairdi/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "fairdi/csv.hpp"
#include "fairdi/error.hpp"

namespace fairdi {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw Error(ErrorCode::configuration, "unknown optimizer '" + s + "'");
}

std::string rescale_name(WeightRescale r) { return r == WeightRescale::sum_to_n ? "sum_to_n" : "sum_to_one"; }

WeightRescale rescale_from_string(const std::string& s) {
  if (s == "sum_to_n") return WeightRescale::sum_to_n;
  if (s == "sum_to_one") return WeightRescale::sum_to_one;
  throw Error(ErrorCode::configuration, "unknown weight_rescale '" + s + "'");
}

std::string kl_name(KlDirection d) { return d == KlDirection::student_first ? "student_first" : "teacher_first"; }

KlDirection kl_from_string(const std::string& s) {
  if (s == "student_first") return KlDirection::student_first;
  if (s == "teacher_first") return KlDirection::teacher_first;
  throw Error(ErrorCode::configuration, "unknown kl_direction '" + s + "'");
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> idx) {
  Batch b;
  for (const std::size_t i : idx) {
    const Sample& s = ds.samples[i];
    b.inputs.push_back(s.features);
    b.targets.push_back(one_hot(s.label, 2));
    b.attributes.push_back(s.attribute);
  }
  return b;
}

double score_of(const DenseNet& net, const Head& head, const std::vector<double>& x) {
  return forward(net, head, x).probs[1];
}

double safe_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  try {
    return auc(scores, labels);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::undefined_metric) return kNaN;
    throw;
  }
}

using Objective = std::function<std::pair<double, Gradients>(const Batch&, const DenseNet&, const Head&)>;

std::uint64_t group_index(const TrainPlan& plan) {
  return plan.group ? static_cast<std::uint64_t>(*plan.group) : 0;
}

StageResult run_loop(const Dataset& train, const TrainPlan& plan, const Validator& validate, DenseNet net, Head head,
                     const Objective& objective) {
  plan.validate();
  if (train.samples.empty()) throw Error(ErrorCode::invalid_input, "empty training set");
  const auto t0 = std::chrono::steady_clock::now();
  const std::string name = to_string(plan.stage);
  const std::uint64_t gi = group_index(plan);

  StageResult res;
  res.record.stage = name;
  res.record.group = plan.group;
  res.record.seed = plan.seed;

  Optimizer opt(plan.optimizer);
  BatchSampler sampler(train, plan.batch_size, plan.sampling, derive_seed(plan.seed, name + "/sampler", gi));
  Rng aug(derive_seed(plan.seed, name + "/cutmix", gi));
  EarlyStopper stopper(plan.patience);
  DenseNet best_net = net;
  Head best_head = head;
  res.record.stop_reason = plan.max_epochs == 0 ? "no_epochs" : "max_epochs";

  for (int epoch = 1; epoch <= plan.max_epochs; ++epoch) {
    double lr = plan.optimizer.learning_rate;
    if (plan.lr_decay_every > 0) lr *= std::pow(plan.lr_decay_factor, (epoch - 1) / plan.lr_decay_every);
    opt.set_learning_rate(lr);

    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (const auto& idx : sampler.epoch()) {
      ++batch_no;
      const Batch b = cutmix(make_batch(train, idx), plan.cutmix_beta, plan.cutmix_prob, train.image_side, aug);
      std::pair<double, Gradients> step;
      try {
        step = objective(b, net, head);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::numeric_error) throw;
        throw Error(ErrorCode::numeric_error, name + " epoch " + std::to_string(epoch) + " batch " +
                                                  std::to_string(batch_no) + ": " + e.what());
      }
      if (!std::isfinite(step.first)) {
        throw Error(ErrorCode::numeric_error, name + " epoch " + std::to_string(epoch) + " batch " +
                                                  std::to_string(batch_no) + ": non-finite loss");
      }
      apply_gradients(opt, net, head, step.second);
      loss_sum += step.first;
    }

    const ValidationScore v = validate(epoch, net, head);
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    log.train_loss = loss_sum / static_cast<double>(batch_no);
    log.val_overall_auc = v.overall;
    log.val_worst_auc = v.worst;
    log.selection = v.selection;
    res.record.epochs.push_back(log);

    if (stopper.observe(epoch, v.selection)) {
      best_net = net;
      best_head = head;
    }
    if (stopper.should_stop()) {
      res.record.stop_reason = "early_stop";
      break;
    }
  }

  res.net = std::move(best_net);
  res.head = std::move(best_head);
  res.record.best_epoch = stopper.best_epoch();
  res.record.checkpoint_id = name + (plan.group ? "_g" + std::to_string(*plan.group) : "") + "@epoch" +
                             std::to_string(res.record.best_epoch);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

Objective fis_objective(const FisConfig& cfg) {
  return [cfg](const Batch& b, const DenseNet& net, const Head& head) {
    const FisLossResult r = fis_loss(b, net, head, cfg);
    return std::make_pair(r.loss, fis_gradients(b, net, head, r.weights));
  };
}

Objective erm_objective() {
  return [](const Batch& b, const DenseNet& net, const Head& head) {
    const std::vector<double> ones(b.size(), 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double l = soft_cross_entropy(forward(net, head, b.inputs[i]).probs, b.targets[i]);
      if (!std::isfinite(l)) throw Error(ErrorCode::numeric_error, "NaN loss for sample " + std::to_string(i));
      sum += ones[i] * l;
    }
    return std::make_pair(sum / static_cast<double>(b.size()),
                          backward(net, head, b, ones, LossKind::cross_entropy));
  };
}

std::pair<DenseNet, Head> initial_model(const Dataset& train, const TrainPlan& plan) {
  Rng rng(derive_seed(plan.seed, "init"));
  DenseNet net = make_mlp(train.feature_dim, plan.hidden, rng);
  Head head = make_head(net.output_dim(), 2, rng);
  return {std::move(net), std::move(head)};
}

DenseNet frozen_copy(const DenseNet& backbone) {
  DenseNet net = backbone;
  net.frozen = true;
  return net;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::erm:
      return "erm";
    case Stage::step0_fis:
      return "step0_fis";
    case Stage::step1_teacher:
      return "step1_teacher";
    case Stage::step2_student:
      return "step2_student";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (const Stage s : {Stage::erm, Stage::step0_fis, Stage::step1_teacher, Stage::step2_student}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::configuration, "unknown stage '" + name + "'");
}

void TrainPlan::validate() const {
  if (max_epochs < 0) throw Error(ErrorCode::configuration, "max_epochs must be nonnegative");
  if (patience < 1) throw Error(ErrorCode::configuration, "patience must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::configuration, "batch_size must be positive");
  if (lr_decay_every < 0) throw Error(ErrorCode::configuration, "lr_decay_every must be nonnegative");
  if (!(lr_decay_factor > 0.0)) throw Error(ErrorCode::configuration, "lr_decay_factor must be positive");
  if (!(cutmix_beta > 0.0)) throw Error(ErrorCode::configuration, "cutmix_beta must be positive");
  if (!(cutmix_prob >= 0.0 && cutmix_prob <= 1.0)) throw Error(ErrorCode::configuration, "cutmix_prob must be in [0, 1]");
  if (stage == Stage::step1_teacher && !group) throw Error(ErrorCode::configuration, "teacher plan needs a group");
  optimizer.validate();
  fis.validate();
  if (stage == Stage::step2_student) distill.validate();
}

TrainPlan default_plan(Stage stage, std::uint64_t seed) {
  TrainPlan p;
  p.stage = stage;
  p.seed = seed;
  if (stage == Stage::erm || stage == Stage::step0_fis) {
    p.optimizer.kind = OptimizerKind::adam;
    p.optimizer.learning_rate = 1e-4;
    p.optimizer.weight_decay = 1e-4;
    p.lr_decay_every = 10;
    p.fis.c = stage == Stage::erm ? 0.0 : 0.5;
    if (stage == Stage::erm) p.sampling = Sampling::uniform;
  } else {
    p.optimizer.kind = OptimizerKind::sgd_momentum;
    p.optimizer.learning_rate = 1e-3;
    p.optimizer.momentum = 0.9;
    p.optimizer.weight_decay = 0.0;
    p.lr_decay_every = 0;
    p.fis.c = stage == Stage::step1_teacher ? 0.0 : 0.5;
  }
  return p;
}

nlohmann::json plan_to_json(const TrainPlan& p) {
  nlohmann::json j;
  j["stage"] = to_string(p.stage);
  j["max_epochs"] = p.max_epochs;
  j["patience"] = p.patience;
  j["batch_size"] = p.batch_size;
  j["sampling"] = p.sampling == Sampling::uniform ? "uniform" : "round_robin";
  j["optimizer"] = {{"kind", optimizer_name(p.optimizer.kind)},
                    {"learning_rate", p.optimizer.learning_rate},
                    {"momentum", p.optimizer.momentum},
                    {"beta1", p.optimizer.beta1},
                    {"beta2", p.optimizer.beta2},
                    {"epsilon", p.optimizer.epsilon},
                    {"weight_decay", p.optimizer.weight_decay}};
  j["lr_decay_every"] = p.lr_decay_every;
  j["lr_decay_factor"] = p.lr_decay_factor;
  j["c"] = p.fis.c;
  j["weight_rescale"] = rescale_name(p.fis.weight_rescale);
  if (p.stage == Stage::step2_student) {
    j["lambda"] = p.distill.lambda;
    j["tau"] = p.distill.tau;
    j["kl_direction"] = kl_name(p.distill.kl_direction);
    j["temp_on_student"] = p.distill.temp_on_student;
  }
  j["cutmix_beta"] = p.cutmix_beta;
  j["cutmix_prob"] = p.cutmix_prob;
  j["hidden"] = p.hidden;
  j["seed"] = p.seed;
  if (p.group) j["group"] = *p.group;
  return j;
}

TrainPlan plan_from_json(const nlohmann::json& j, TrainPlan p) {
  try {
    if (j.contains("stage")) p.stage = stage_from_string(j.at("stage").get<std::string>());
    if (j.contains("max_epochs")) p.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) p.patience = j.at("patience").get<int>();
    if (j.contains("batch_size")) p.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("sampling")) {
      const auto m = j.at("sampling").get<std::string>();
      if (m != "uniform" && m != "round_robin") throw Error(ErrorCode::configuration, "unknown sampling '" + m + "'");
      p.sampling = m == "uniform" ? Sampling::uniform : Sampling::round_robin;
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.contains("kind")) p.optimizer.kind = optimizer_from_string(o.at("kind").get<std::string>());
      if (o.contains("learning_rate")) p.optimizer.learning_rate = o.at("learning_rate").get<double>();
      if (o.contains("momentum")) p.optimizer.momentum = o.at("momentum").get<double>();
      if (o.contains("beta1")) p.optimizer.beta1 = o.at("beta1").get<double>();
      if (o.contains("beta2")) p.optimizer.beta2 = o.at("beta2").get<double>();
      if (o.contains("epsilon")) p.optimizer.epsilon = o.at("epsilon").get<double>();
      if (o.contains("weight_decay")) p.optimizer.weight_decay = o.at("weight_decay").get<double>();
    }
    if (j.contains("lr_decay_every")) p.lr_decay_every = j.at("lr_decay_every").get<int>();
    if (j.contains("lr_decay_factor")) p.lr_decay_factor = j.at("lr_decay_factor").get<double>();
    if (j.contains("c")) p.fis.c = j.at("c").get<double>();
    if (j.contains("weight_rescale")) p.fis.weight_rescale = rescale_from_string(j.at("weight_rescale").get<std::string>());
    if (j.contains("lambda")) p.distill.lambda = j.at("lambda").get<double>();
    if (j.contains("tau")) p.distill.tau = j.at("tau").get<double>();
    if (j.contains("kl_direction")) p.distill.kl_direction = kl_from_string(j.at("kl_direction").get<std::string>());
    if (j.contains("temp_on_student")) p.distill.temp_on_student = j.at("temp_on_student").get<bool>();
    if (j.contains("cutmix_beta")) p.cutmix_beta = j.at("cutmix_beta").get<double>();
    if (j.contains("cutmix_prob")) p.cutmix_prob = j.at("cutmix_prob").get<double>();
    if (j.contains("hidden")) p.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("group")) p.group = j.at("group").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("train plan: ") + e.what());
  }
  p.distill.fis = p.fis;
  return p;
}

nlohmann::json record_to_json(const ExperimentRecord& rec) {
  nlohmann::json j;
  j["stage"] = rec.stage;
  if (rec.group) j["group"] = *rec.group;
  j["seed"] = rec.seed;
  j["best_epoch"] = rec.best_epoch;
  j["checkpoint_id"] = rec.checkpoint_id;
  j["stop_reason"] = rec.stop_reason;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : rec.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"learning_rate", e.learning_rate},
                           {"train_loss", e.train_loss},
                           {"val_overall_auc", e.val_overall_auc},
                           {"val_worst_auc", e.val_worst_auc},
                           {"selection", e.selection}});
  }
  return j;
}

std::string record_to_csv(const ExperimentRecord& rec) {
  std::string s = "epoch,train_loss,val_overall_auc,val_worst_auc\n";
  for (const auto& e : rec.epochs) {
    s += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_overall_auc) + "," +
         format_double(e.val_worst_auc) + "\n";
  }
  return s;
}

Split split(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  if (ds.samples.empty()) throw Error(ErrorCode::invalid_input, "cannot split an empty dataset");
  double rsum = 0.0;
  for (const double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::invalid_parameter, "split ratios must be nonnegative");
    rsum += r;
  }
  if (std::abs(rsum - 1.0) > 1e-9) throw Error(ErrorCode::invalid_parameter, "split ratios must sum to 1");

  const std::size_t n = ds.samples.size();
  Split out;

  auto strata_of = [&](bool with_attribute) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) {
      const Sample& s = ds.samples[i];
      strata[{s.label, with_attribute ? s.attribute : 0}].push_back(i);
    }
    return strata;
  };
  double min_ratio = 1.0;
  for (const double r : ratios) {
    if (r > 0.0) min_ratio = std::min(min_ratio, r);
  }
  auto strata = strata_of(true);
  for (const auto& [key, members] : strata) {
    if (static_cast<double>(members.size()) * min_ratio < 1.0) {
      out.warnings.push_back("stratum (label " + std::to_string(key.first) + ", attribute " +
                             std::to_string(key.second) + ") has " + std::to_string(members.size()) +
                             " samples, too few for every split; stratifying by label only");
      strata = strata_of(false);
      break;
    }
  }

  // Global split sizes by largest remainder.
  std::array<std::size_t, 3> target{};
  {
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> rem;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = ratios[s] * static_cast<double>(n);
      target[s] = static_cast<std::size_t>(std::floor(exact));
      assigned += target[s];
      rem.emplace_back(exact - std::floor(exact), s);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++target[rem[i % 3].second];
  }

  // Floor quotas per stratum, then hand leftovers to the largest remainders
  // while the split still has room, then fill whatever is left.
  std::vector<std::array<std::size_t, 3>> quota(strata.size());
  std::vector<std::size_t> leftover(strata.size());
  std::array<std::size_t, 3> filled{};
  std::vector<std::tuple<double, std::size_t, std::size_t>> rems;
  std::size_t h = 0;
  for (const auto& [key, members] : strata) {
    std::size_t used = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = ratios[s] * static_cast<double>(members.size());
      quota[h][s] = static_cast<std::size_t>(std::floor(exact));
      used += quota[h][s];
      filled[s] += quota[h][s];
      rems.emplace_back(exact - std::floor(exact), h, s);
    }
    leftover[h] = members.size() - used;
    ++h;
  }
  std::stable_sort(rems.begin(), rems.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  for (const auto& [r, hh, s] : rems) {
    if (r > 0.0 && leftover[hh] > 0 && filled[s] < target[s]) {
      ++quota[hh][s];
      --leftover[hh];
      ++filled[s];
    }
  }
  for (std::size_t hh = 0; hh < quota.size(); ++hh) {
    for (std::size_t s = 0; s < 3 && leftover[hh] > 0; ++s) {
      while (leftover[hh] > 0 && filled[s] < target[s]) {
        ++quota[hh][s];
        --leftover[hh];
        ++filled[s];
      }
    }
  }

  Rng rng(derive_seed(seed, "split"));
  std::array<std::vector<std::size_t>, 3> parts;
  h = 0;
  for (auto& [key, members] : strata) {
    std::vector<std::size_t> m = members;
    rng.shuffle(m);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < quota[h][s]; ++k) parts[s].push_back(m[pos++]);
    }
    ++h;
  }
  std::array<Dataset*, 3> dst{&out.train, &out.val, &out.test};
  for (std::size_t s = 0; s < 3; ++s) {
    std::sort(parts[s].begin(), parts[s].end());
    dst[s]->feature_dim = ds.feature_dim;
    dst[s]->image_side = ds.image_side;
    for (const std::size_t i : parts[s]) dst[s]->samples.push_back(ds.samples[i]);
  }
  return out;
}

Dataset cohort(const Dataset& ds, int group) {
  Dataset out;
  out.feature_dim = ds.feature_dim;
  out.image_side = ds.image_side;
  for (const auto& s : ds.samples) {
    if (s.attribute == group) out.samples.push_back(s);
  }
  return out;
}

std::vector<int> attribute_values(const Dataset& ds) {
  std::set<int> seen;
  for (const auto& s : ds.samples) seen.insert(s.attribute);
  return {seen.begin(), seen.end()};
}

Batch cutmix_with_lambda(const Batch& batch, std::span<const double> lambdas, std::span<const std::size_t> partners,
                         std::size_t image_side, Rng& rng) {
  const std::size_t n = batch.size();
  if (lambdas.size() != n || partners.size() != n) throw Error(ErrorCode::shape_error, "cutmix arguments differ in length");
  Batch out = batch;
  if (n < 2) return out;
  const std::size_t d = batch.inputs.front().size();
  for (const auto& x : batch.inputs) {
    if (x.size() != d) throw Error(ErrorCode::shape_error, "cutmix needs samples of equal shape");
  }
  if (image_side > 0 && image_side * image_side != d) throw Error(ErrorCode::shape_error, "image side does not match input");

  for (std::size_t i = 0; i < n; ++i) {
    const double lam = lambdas[i];
    if (!(lam >= 0.0 && lam <= 1.0)) throw Error(ErrorCode::invalid_parameter, "cutmix lambda must be in [0, 1]");
    const std::size_t p = partners[i];
    if (p >= n) throw Error(ErrorCode::invalid_parameter, "cutmix partner out of range");
    const auto& src = batch.inputs[p];
    std::size_t area = 0;
    if (image_side > 0) {
      const double side = static_cast<double>(image_side);
      const auto bh = static_cast<std::size_t>(std::llround(side * std::sqrt(1.0 - lam)));
      const auto bw = bh;
      const std::size_t r0 = rng.uniform_index(image_side - bh + 1);
      const std::size_t c0 = rng.uniform_index(image_side - bw + 1);
      for (std::size_t r = r0; r < r0 + bh; ++r) {
        for (std::size_t c = c0; c < c0 + bw; ++c) out.inputs[i][r * image_side + c] = src[r * image_side + c];
      }
      area = bh * bw;
    } else {
      const auto len = static_cast<std::size_t>(std::llround(static_cast<double>(d) * (1.0 - lam)));
      const std::size_t start = rng.uniform_index(d - len + 1);
      for (std::size_t k = start; k < start + len; ++k) out.inputs[i][k] = src[k];
      area = len;
    }
    const double kept = 1.0 - static_cast<double>(area) / static_cast<double>(d);
    for (std::size_t c = 0; c < out.targets[i].size(); ++c) {
      out.targets[i][c] = kept * batch.targets[i][c] + (1.0 - kept) * batch.targets[p][c];
    }
  }
  return out;
}

Batch cutmix(const Batch& batch, double beta, double prob, std::size_t image_side, Rng& rng) {
  if (batch.size() < 2) return batch;
  if (!(rng.uniform() < prob)) return batch;
  std::vector<std::size_t> partners(batch.size());
  std::iota(partners.begin(), partners.end(), 0);
  rng.shuffle(partners);
  std::vector<double> lambdas(batch.size());
  for (auto& l : lambdas) l = rng.beta(beta, beta);
  return cutmix_with_lambda(batch, lambdas, partners, image_side, rng);
}

BatchSampler::BatchSampler(const Dataset& ds, std::size_t batch_size, Sampling mode, std::uint64_t seed)
    : total_(ds.samples.size()), batch_size_(batch_size), mode_(mode), rng_(seed) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_parameter, "batch_size must be positive");
  if (total_ == 0) throw Error(ErrorCode::empty_batch, "sampler over empty dataset");
  batches_ = (total_ + batch_size - 1) / batch_size;
  if (mode == Sampling::uniform) {
    std::vector<std::size_t> all(total_);
    std::iota(all.begin(), all.end(), 0);
    streams_.push_back(std::move(all));
  } else {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < total_; ++i) groups[ds.samples[i].attribute].push_back(i);
    for (auto& [g, idx] : groups) streams_.push_back(std::move(idx));
  }
  for (auto& s : streams_) rng_.shuffle(s);
  cursor_.assign(streams_.size(), 0);
}

std::size_t BatchSampler::next_from(std::size_t stream) {
  if (cursor_[stream] == streams_[stream].size()) {
    rng_.shuffle(streams_[stream]);
    cursor_[stream] = 0;
  }
  return streams_[stream][cursor_[stream]++];
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch() {
  std::vector<std::vector<std::size_t>> out;
  std::size_t remaining = total_;
  const std::size_t g = streams_.size();
  for (std::size_t b = 0; b < batches_; ++b) {
    const std::size_t size = std::min(batch_size_, remaining);
    remaining -= size;
    std::vector<std::size_t> batch;
    for (std::size_t j = 0; j < size; ++j) batch.push_back(next_from((offset_ + j) % g));
    offset_ = (offset_ + size) % g;
    out.push_back(std::move(batch));
  }
  return out;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw Error(ErrorCode::configuration, "patience must be at least 1");
}

bool EarlyStopper::observe(int epoch, double metric) {
  if (best_epoch_ == 0 || metric > best_) {
    best_epoch_ = epoch;
    best_ = metric;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

Validator worst_case_validator(const Dataset& val) {
  return [&val](int, const DenseNet& net, const Head& head) {
    std::vector<double> scores;
    std::vector<int> labels;
    std::map<int, std::pair<std::vector<double>, std::vector<int>>> groups;
    for (const auto& s : val.samples) {
      const double sc = score_of(net, head, s.features);
      scores.push_back(sc);
      labels.push_back(s.label);
      groups[s.attribute].first.push_back(sc);
      groups[s.attribute].second.push_back(s.label);
    }
    ValidationScore v;
    v.overall = safe_auc(scores, labels);
    v.worst = std::numeric_limits<double>::infinity();
    for (const auto& [g, data] : groups) {
      const double a = safe_auc(data.first, data.second);
      v.worst = std::isnan(a) || std::isnan(v.worst) ? kNaN : std::min(v.worst, a);
    }
    if (groups.empty()) v.worst = kNaN;
    v.selection = v.worst;
    return v;
  };
}

Validator cohort_validator(const Dataset& val, int group) {
  return [&val, group](int, const DenseNet& net, const Head& head) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : val.samples) {
      if (s.attribute != group) continue;
      scores.push_back(score_of(net, head, s.features));
      labels.push_back(s.label);
    }
    ValidationScore v;
    v.overall = scores.empty() ? kNaN : safe_auc(scores, labels);
    v.worst = v.overall;
    v.selection = v.overall;
    return v;
  };
}

StageResult train_erm(const Dataset& train, const TrainPlan& plan, const Validator& validate) {
  auto [net, head] = initial_model(train, plan);
  return train_erm(train, plan, validate, std::move(net), std::move(head));
}

StageResult train_erm(const Dataset& train, const TrainPlan& plan, const Validator& validate, DenseNet net, Head head) {
  if (plan.stage != Stage::erm) throw Error(ErrorCode::configuration, "train_erm needs an erm plan");
  return run_loop(train, plan, validate, std::move(net), std::move(head), erm_objective());
}

StageResult train_stage0(const Dataset& train, const TrainPlan& plan, const Validator& validate) {
  auto [net, head] = initial_model(train, plan);
  return train_stage0(train, plan, validate, std::move(net), std::move(head));
}

StageResult train_stage0(const Dataset& train, const TrainPlan& plan, const Validator& validate, DenseNet net,
                         Head head) {
  if (plan.stage != Stage::step0_fis) throw Error(ErrorCode::configuration, "train_stage0 needs a step0_fis plan");
  return run_loop(train, plan, validate, std::move(net), std::move(head), fis_objective(plan.fis));
}

StageResult train_stage1(const Dataset& train, const DenseNet& backbone, const TrainPlan& plan,
                         const Validator& validate) {
  if (plan.stage != Stage::step1_teacher) throw Error(ErrorCode::configuration, "train_stage1 needs a step1_teacher plan");
  plan.validate();
  const Dataset data = cohort(train, *plan.group);
  if (data.samples.empty()) {
    throw Error(ErrorCode::cohort_empty, "no training samples for group " + std::to_string(*plan.group));
  }
  Rng rng(derive_seed(plan.seed, "teacher-head", group_index(plan)));
  Head head = make_head(backbone.output_dim(), 2, rng);
  return run_loop(data, plan, validate, frozen_copy(backbone), std::move(head), fis_objective(plan.fis));
}

StageResult train_stage2(const Dataset& train, const DenseNet& backbone, const std::map<int, Head>& teachers,
                         const TrainPlan& plan, const Validator& validate) {
  if (plan.stage != Stage::step2_student) throw Error(ErrorCode::configuration, "train_stage2 needs a step2_student plan");
  for (const int g : attribute_values(train)) {
    if (!teachers.count(g)) throw Error(ErrorCode::configuration, "no teacher for group " + std::to_string(g));
  }
  Rng rng(derive_seed(plan.seed, "student-head"));
  Head head = make_head(backbone.output_dim(), 2, rng);
  const DistillConfig cfg = plan.distill;
  Objective obj = [&teachers, cfg](const Batch& b, const DenseNet& net, const Head& h) {
    const StudentLossResult r = student_loss(b, net, h, teachers, cfg);
    return std::make_pair(r.loss, student_gradients(b, net, h, teachers, cfg));
  };
  return run_loop(train, plan, validate, frozen_copy(backbone), std::move(head), obj);
}

FairDiPlan default_fairdi_plan(std::uint64_t seed) {
  FairDiPlan p;
  p.stage0 = default_plan(Stage::step0_fis, seed);
  p.stage1 = default_plan(Stage::step1_teacher, seed);
  p.stage2 = default_plan(Stage::step2_student, seed);
  return p;
}

FairDiResult run_fairdi(const Split& data, const FairDiPlan& plan) {
  FairDiResult r;
  r.stage0 = train_stage0(data.train, plan.stage0, worst_case_validator(data.val));
  const DenseNet backbone = frozen_copy(r.stage0.net);

  const auto groups = attribute_values(data.train);
  auto teach = [&](int g) {
    TrainPlan p = plan.stage1;
    p.group = g;
    return train_stage1(data.train, backbone, p, cohort_validator(data.val, g));
  };
  if (plan.parallel_teachers) {
    std::map<int, std::future<StageResult>> jobs;
    for (const int g : groups) jobs.emplace(g, std::async(std::launch::async, teach, g));
    for (auto& [g, job] : jobs) r.teachers.emplace(g, job.get());
  } else {
    for (const int g : groups) r.teachers.emplace(g, teach(g));
  }

  std::map<int, Head> heads;
  for (const auto& [g, t] : r.teachers) heads.emplace(g, t.head);
  r.student = train_stage2(data.train, backbone, heads, plan.stage2, worst_case_validator(data.val));
  return r;
}

std::vector<ClassificationRecord> predict_scores(const DenseNet& net, const Head& head, const Dataset& ds) {
  std::vector<ClassificationRecord> out;
  out.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    out.push_back({std::to_string(i), score_of(net, head, s.features), s.label, s.attribute});
  }
  return out;
}

MetricsReport evaluate(const DenseNet& net, const Head& head, const Dataset& ds) {
  PredictionSet p;
  p.classification = predict_scores(net, head, ds);
  return report(p, Task::classification);
}

}  // namespace fairdi
