#include "fairdi/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairdi/checkpoint.hpp"
#include "fairdi/csv.hpp"
#include "fairdi/datagen.hpp"
#include "fairdi/error.hpp"
#include "fairdi/metrics.hpp"
#include "fairdi/metrics_io.hpp"
#include "fairdi/pipeline.hpp"
#include "fairdi/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fairdi {
namespace {

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

fs::path prepare_dir(const std::string& requested, const std::string& fallback) {
  const fs::path dir = requested.empty() ? default_output_root() / fallback : fs::path(requested);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// ---- generate -------------------------------------------------------------

struct GenerateOptions {
  std::string out;
  std::string config;
  GenSpec spec;
};

int cmd_generate(const GenerateOptions& o, const CLI::App& sub, std::ostream& out) {
  GenSpec spec;
  if (!o.config.empty()) spec = spec_from_json(read_json(o.config), spec);
  auto given = [&](const char* flag) { return sub.get_option(flag)->count() > 0; };
  if (given("--n-samples")) spec.n_samples = o.spec.n_samples;
  if (given("--n-features")) spec.n_features = o.spec.n_features;
  if (given("--image-side")) spec.image_side = o.spec.image_side;
  if (given("--groups")) {
    spec.n_groups = o.spec.n_groups;
    if (!given("--proportions")) spec.group_proportions.assign(spec.n_groups, 1.0 / static_cast<double>(spec.n_groups));
  }
  if (given("--proportions")) spec.group_proportions = o.spec.group_proportions;
  if (given("--separation")) spec.base_separation = o.spec.base_separation;
  if (given("--bias")) spec.bias_strength = o.spec.bias_strength;
  if (given("--noise")) spec.label_noise = o.spec.label_noise;
  if (given("--rotation")) spec.max_rotation = o.spec.max_rotation;
  if (given("--shift")) spec.group_shift = o.spec.group_shift;
  if (given("--seed")) spec.seed = o.spec.seed;
  spec.validate();

  const fs::path dir = prepare_dir(o.out, "generate");
  const GeneratedData data = generate(spec);
  save_dataset(data.dataset, dir / "dataset.csv");
  write_json(dir / "oracle.json", oracle_to_json(data.oracle));
  write_json(dir / "spec.json", spec_to_json(spec));
  out << "wrote " << data.dataset.size() << " samples to " << (dir / "dataset.csv").string() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  std::string dataset;
  std::string method = "fairdi";
  std::string out;
  std::string config;
  std::uint64_t seed = 42;
  int max_epochs = 30;
  int patience = 5;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double head_lr = 1e-3;
  double c = 0.5;
  double lambda = 0.95;
  double tau = 1.5;
  double cutmix_prob = 0.5;
  double cutmix_beta = 1.0;
  std::string kl_direction;
  bool sequential_teachers = false;
  std::vector<double> ratios{0.8, 0.1, 0.1};
};

struct TrainSetup {
  std::string method;
  std::uint64_t seed = 42;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  bool parallel_teachers = true;
  std::map<Stage, TrainPlan> plans;
};

std::vector<Stage> stages_for(const std::string& method) {
  if (method == "erm") return {Stage::erm};
  if (method == "fis") return {Stage::step0_fis};
  if (method == "fairdi") return {Stage::step0_fis, Stage::step1_teacher, Stage::step2_student};
  throw Error(ErrorCode::configuration, "unknown method '" + method + "' (expected erm, fis or fairdi)");
}

TrainSetup resolve_train(const TrainOptions& o, const CLI::App& sub) {
  auto given = [&](const char* flag) { return sub.get_option(flag)->count() > 0; };
  TrainSetup s;
  s.method = o.method;
  json cfg = json::object();
  if (!o.config.empty()) cfg = read_json(o.config);
  try {
    if (cfg.contains("seed")) s.seed = cfg.at("seed").get<std::uint64_t>();
    if (cfg.contains("split")) {
      const auto r = cfg.at("split").get<std::vector<double>>();
      if (r.size() != 3) throw Error(ErrorCode::configuration, "split needs three ratios");
      s.ratios = {r[0], r[1], r[2]};
    }
    if (cfg.contains("parallel_teachers")) s.parallel_teachers = cfg.at("parallel_teachers").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("train config: ") + e.what());
  }
  if (given("--seed")) s.seed = o.seed;
  if (given("--ratios")) {
    if (o.ratios.size() != 3) throw Error(ErrorCode::configuration, "--ratios needs three values");
    s.ratios = {o.ratios[0], o.ratios[1], o.ratios[2]};
  }
  if (o.sequential_teachers) s.parallel_teachers = false;

  for (const Stage st : stages_for(o.method)) {
    TrainPlan p = default_plan(st, s.seed);
    if (cfg.contains(to_string(st))) p = plan_from_json(cfg.at(to_string(st)), p);
    p.stage = st;
    p.seed = s.seed;
    const bool head_stage = st == Stage::step1_teacher || st == Stage::step2_student;
    if (given("--max-epochs")) p.max_epochs = o.max_epochs;
    if (given("--patience")) p.patience = o.patience;
    if (given("--batch-size")) p.batch_size = o.batch_size;
    if (given("--lr") && !head_stage) p.optimizer.learning_rate = o.lr;
    if (given("--head-lr") && head_stage) p.optimizer.learning_rate = o.head_lr;
    if (given("--c") && (st == Stage::step0_fis || st == Stage::step2_student)) p.fis.c = o.c;
    if (given("--cutmix-prob")) p.cutmix_prob = o.cutmix_prob;
    if (given("--cutmix-beta")) p.cutmix_beta = o.cutmix_beta;
    if (st == Stage::step2_student) {
      if (given("--lambda")) p.distill.lambda = o.lambda;
      if (given("--tau")) p.distill.tau = o.tau;
      if (given("--kl-direction")) {
        p.distill.kl_direction =
            o.kl_direction == "teacher_first" ? KlDirection::teacher_first : KlDirection::student_first;
      }
      p.distill.fis = p.fis;
    }
    TrainPlan check = p;
    if (st == Stage::step1_teacher && !check.group) check.group = 0;  // set per cohort by run_fairdi
    check.validate();
    s.plans[st] = p;
  }
  return s;
}

json setup_to_json(const TrainSetup& s, const std::string& dataset) {
  json j;
  j["method"] = s.method;
  j["dataset"] = dataset;
  j["seed"] = s.seed;
  j["split"] = s.ratios;
  j["parallel_teachers"] = s.parallel_teachers;
  for (const auto& [st, p] : s.plans) j[to_string(st)] = plan_to_json(p);
  return j;
}

void write_stage_outputs(const fs::path& dir, const std::string& name, const StageResult& r) {
  write_json(dir / (name + ".record.json"), record_to_json(r.record));
  write_text_file(dir / (name + ".epochs.csv"), record_to_csv(r.record));
  write_json(dir / (name + ".timing.json"), {{"stage", name}, {"wall_seconds", r.wall_seconds}});
}

// Test-split report for one model; an undefined metric is written as such.
void write_model_report(const fs::path& dir, const std::string& name, const DenseNet& net, const Head& head,
                        const Dataset& test, std::ostream& err) {
  const auto preds = predict_scores(net, head, test);
  save_classification_predictions(preds, dir / ("predictions_" + name + ".csv"));
  PredictionSet ps;
  ps.classification = preds;
  try {
    const MetricsReport rep = report(ps, Task::classification);
    write_json(dir / ("report_" + name + ".json"), report_to_json(rep));
    write_text_file(dir / ("report_" + name + ".csv"), report_to_csv(rep));
    write_text_file(dir / ("roc_" + name + ".csv"), roc_points_csv(preds));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_metric) throw;
    err << "warning: " << name << ": " << e.what() << "\n";
    write_json(dir / ("report_" + name + ".json"), {{"task", "classification"}, {"undefined", e.what()}});
  }
}

int cmd_train(const TrainOptions& o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const TrainSetup s = resolve_train(o, sub);
  const Dataset ds = load_dataset(o.dataset);
  const fs::path dir = prepare_dir(o.out, o.method);
  json effective = setup_to_json(s, o.dataset);

  const Split data = split(ds, s.ratios, s.seed);
  for (const auto& w : data.warnings) err << "warning: " << w << "\n";
  effective["split_sizes"] = {data.train.size(), data.val.size(), data.test.size()};
  effective["groups"] = attribute_values(data.train);
  write_json(dir / "config.json", effective);

  if (o.method == "erm" || o.method == "fis") {
    const Stage st = o.method == "erm" ? Stage::erm : Stage::step0_fis;
    const TrainPlan& p = s.plans.at(st);
    const StageResult r = st == Stage::erm ? train_erm(data.train, p, worst_case_validator(data.val))
                                           : train_stage0(data.train, p, worst_case_validator(data.val));
    const std::string name = to_string(st);
    save_checkpoint({name, r.net, r.head, s.seed, "", std::nullopt}, dir / (name + ".ckpt.json"));
    write_stage_outputs(dir, name, r);
    write_model_report(dir, name, r.net, r.head, data.test, err);
    out << name << ": best epoch " << r.record.best_epoch << " of " << r.record.epochs.size() << "\n";
    return 0;
  }

  FairDiPlan plan;
  plan.stage0 = s.plans.at(Stage::step0_fis);
  plan.stage1 = s.plans.at(Stage::step1_teacher);
  plan.stage2 = s.plans.at(Stage::step2_student);
  plan.parallel_teachers = s.parallel_teachers;
  const FairDiResult r = run_fairdi(data, plan);

  save_checkpoint({"backbone", r.stage0.net, r.stage0.head, s.seed, "", std::nullopt}, dir / "backbone.ckpt.json");
  write_stage_outputs(dir, "step0_fis", r.stage0);
  write_model_report(dir, "step0_fis", r.stage0.net, r.stage0.head, data.test, err);
  for (const auto& [g, t] : r.teachers) {
    const std::string name = "step1_teacher_g" + std::to_string(g);
    save_checkpoint({"teacher", std::nullopt, t.head, s.seed, "backbone.ckpt.json", g},
                    dir / ("teacher_g" + std::to_string(g) + ".ckpt.json"));
    write_stage_outputs(dir, name, t);
    write_model_report(dir, name, r.stage0.net, t.head, cohort(data.test, g), err);
  }
  save_checkpoint({"student", std::nullopt, r.student.head, s.seed, "backbone.ckpt.json", std::nullopt},
                  dir / "student.ckpt.json");
  write_stage_outputs(dir, "step2_student", r.student);
  write_model_report(dir, "step2_student", r.stage0.net, r.student.head, data.test, err);
  out << "fairdi: backbone epoch " << r.stage0.record.best_epoch << ", " << r.teachers.size()
      << " teachers, student epoch " << r.student.record.best_epoch << "\n";
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateOptions {
  std::string predictions;
  std::string group_values;
  std::string seg_index;
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::uint64_t seed = 42;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  std::string out;
};

void write_report_files(const fs::path& dir, const MetricsReport& rep) {
  write_json(dir / "report.json", report_to_json(rep));
  write_text_file(dir / "report.csv", report_to_csv(rep));
}

int write_undefined(const fs::path& dir, Task task, const Error& e, std::ostream& err) {
  err << "warning: " << e.what() << "\n";
  write_json(dir / "report.json",
             {{"task", task == Task::classification ? "classification" : "segmentation"}, {"undefined", e.what()}});
  write_text_file(dir / "report.csv", std::string("metric,undefined\n") + "report," + e.what() + "\n");
  return 0;
}

int evaluate_predictions(const std::vector<ClassificationRecord>& preds, const fs::path& dir, std::ostream& out,
                         std::ostream& err) {
  PredictionSet ps;
  ps.classification = preds;
  MetricsReport rep;
  try {
    rep = report(ps, Task::classification);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_metric) throw;
    return write_undefined(dir, Task::classification, e, err);
  }
  write_report_files(dir, rep);
  write_text_file(dir / "roc.csv", roc_points_csv(preds));
  const MetricBlock& b = rep.block("auc");
  out << "overall AUC " << fixed4(b.overall) << ", worst " << fixed4(b.worst_case) << ", gap " << fixed4(b.gap)
      << ", ES-AUC " << fixed4(b.equity_scaled) << "\n";
  return 0;
}

int evaluate_group_values(const fs::path& path, const fs::path& dir, std::ostream& out) {
  const auto rows = load_group_values(path);
  std::set<int> groups;
  for (const auto& r : rows) {
    for (const auto& [g, v] : r.per_group) groups.insert(g);
  }
  json j = {{"task", "group-values"}, {"rows", json::array()}};
  std::string csv = "task,metric,overall,worst_case,equity_scaled,gap,mean_psd,max_psd";
  for (const int g : groups) csv += ",group_" + std::to_string(g);
  csv += "\n";
  for (const auto& r : rows) {
    const bool is_auc = r.metric == "auc";
    const MetricBlock b = summarize_groups(r.metric, r.overall, r.per_group,
                                           is_auc ? EquityScaling::mean_discrepancy : EquityScaling::sum_discrepancy,
                                           is_auc);
    json bj = block_to_json(b);
    bj["task"] = r.task;
    j["rows"].push_back(bj);
    csv += r.task + "," + r.metric + "," + format_double(b.overall) + "," + format_double(b.worst_case) + "," +
           format_double(b.equity_scaled) + "," + format_double(b.gap) + "," +
           (b.mean_psd ? format_double(*b.mean_psd) : "") + "," + (b.max_psd ? format_double(*b.max_psd) : "");
    for (const int g : groups) {
      csv += ",";
      const auto it = b.per_group.find(g);
      if (it != b.per_group.end()) csv += format_double(it->second);
    }
    csv += "\n";
  }
  write_json(dir / "report.json", j);
  write_text_file(dir / "report.csv", csv);
  out << "evaluated " << rows.size() << " rows\n";
  return 0;
}

int evaluate_segmentation(const fs::path& index, const fs::path& dir, std::ostream& out, std::ostream& err) {
  PredictionSet ps;
  ps.segmentation = load_segmentation_index(index);
  MetricsReport rep;
  try {
    rep = report(ps, Task::segmentation);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_metric) throw;
    return write_undefined(dir, Task::segmentation, e, err);
  }
  write_report_files(dir, rep);
  out << "Dice " << fixed4(rep.block("dice").overall) << ", ES-Dice " << fixed4(rep.block("dice").equity_scaled)
      << ", IoU " << fixed4(rep.block("iou").overall) << "\n";
  return 0;
}

std::pair<DenseNet, Head> load_model(const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.head) throw Error(ErrorCode::parse_error, path.string() + ": checkpoint has no head");
  if (ck.backbone) return {*ck.backbone, *ck.head};
  if (ck.backbone_ref.empty()) throw Error(ErrorCode::parse_error, path.string() + ": no backbone and no backbone_ref");
  const Checkpoint base = load_checkpoint(path.parent_path() / ck.backbone_ref);
  if (!base.backbone) throw Error(ErrorCode::parse_error, ck.backbone_ref + ": referenced checkpoint has no backbone");
  return {*base.backbone, *ck.head};
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  const int modes = !o.predictions.empty() + !o.group_values.empty() + !o.seg_index.empty() + !o.checkpoint.empty();
  if (modes != 1) {
    throw Error(ErrorCode::configuration,
                "give exactly one of --predictions, --group-values, --seg-index or --checkpoint");
  }
  if (!o.checkpoint.empty() && o.dataset.empty()) throw Error(ErrorCode::configuration, "--checkpoint needs --dataset");
  const fs::path dir = prepare_dir(o.out, "evaluate");
  if (!o.predictions.empty()) return evaluate_predictions(load_classification_predictions(o.predictions), dir, out, err);
  if (!o.group_values.empty()) return evaluate_group_values(o.group_values, dir, out);
  if (!o.seg_index.empty()) return evaluate_segmentation(o.seg_index, dir, out, err);

  const auto [net, head] = load_model(o.checkpoint);
  const Dataset ds = load_dataset(o.dataset);
  Dataset part;
  if (o.split == "all") {
    part = ds;
  } else {
    if (o.ratios.size() != 3) throw Error(ErrorCode::configuration, "--ratios needs three values");
    Split sp = split(ds, {o.ratios[0], o.ratios[1], o.ratios[2]}, o.seed);
    if (o.split == "train") {
      part = std::move(sp.train);
    } else if (o.split == "val") {
      part = std::move(sp.val);
    } else if (o.split == "test") {
      part = std::move(sp.test);
    } else {
      throw Error(ErrorCode::configuration, "unknown split '" + o.split + "'");
    }
  }
  const auto preds = predict_scores(net, head, part);
  save_classification_predictions(preds, dir / "predictions.csv");
  return evaluate_predictions(preds, dir, out, err);
}

// ---- stats ----------------------------------------------------------------

struct StatsOptions {
  std::string scores;
  double alpha = 0.05;
  bool lower_is_better = false;
  std::string out;
};

int cmd_stats(const StatsOptions& o, std::ostream& out) {
  const RankTable table = load_rank_table(o.scores, !o.lower_is_better);
  const fs::path dir = prepare_dir(o.out, "stats");
  const CdDiagram d = cd_diagram_data(table, o.alpha);
  json j = cd_diagram_to_json(d);
  j["k"] = table.algorithms.size();
  j["n"] = table.tasks.size();
  j["average_ranks"] = json::object();
  const auto avg = average_ranks(table);
  for (std::size_t i = 0; i < avg.size(); ++i) j["average_ranks"][table.algorithms[i]] = avg[i];
  write_json(dir / "stats.json", j);
  write_text_file(dir / "ranks.csv", ranks_to_csv(table));
  out << "chi2 " << d.friedman.chi2 << ", p " << d.friedman.p_value << ", CD " << fixed4(d.cd);
  out << (d.gate_passed ? "" : " (Friedman gate failed: no cliques)") << "\n";
  return 0;
}

// ---- report ---------------------------------------------------------------

std::vector<std::string> expected_models(const json& config) {
  const std::string method = config.value("method", "");
  if (method == "erm") return {"erm"};
  if (method == "fis") return {"step0_fis"};
  std::vector<std::string> names{"step0_fis"};
  for (const int g : config.value("groups", std::vector<int>{})) names.push_back("step1_teacher_g" + std::to_string(g));
  names.push_back("step2_student");
  return names;
}

int cmd_report(const std::string& dir_arg, const std::string& out_arg, std::ostream& out, std::ostream& err) {
  const fs::path dir(dir_arg);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io_error, dir.string() + " is not a directory");
  std::vector<std::string> missing;
  if (!fs::exists(dir / "config.json")) {
    missing = {"config.json", "<stage>.record.json", "<stage>.timing.json", "report_<stage>.json"};
    err << "error: " << dir.string() << " holds no experiment; expected files:\n";
    for (const auto& m : missing) err << "  " << m << "\n";
    return 1;
  }
  const json config = read_json(dir / "config.json");
  const auto models = expected_models(config);

  json summary = {{"method", config.value("method", "")}, {"models", json::object()}};
  std::string md = "# Experiment summary\n\nMethod: " + config.value("method", std::string("?")) + "\n\n";
  std::string metrics_md =
      "## Test metrics\n\n| Model | Overall AUC | Min AUC | ES-AUC | AUC Gap | MeanPSD | MaxPSD | Group AUCs |\n"
      "|---|---|---|---|---|---|---|---|\n";
  std::string runtime_md = "## Runtime\n\n| Stage | Wall seconds | Best epoch | Epochs run |\n|---|---|---|---|\n";
  double total_seconds = 0.0;

  for (const auto& name : models) {
    json entry = json::object();
    const fs::path rec = dir / (name + ".record.json");
    const fs::path tim = dir / (name + ".timing.json");
    const fs::path rep = dir / ("report_" + name + ".json");
    for (const auto& p : {rec, tim, rep}) {
      if (!fs::exists(p)) missing.push_back(p.filename().string());
    }
    if (fs::exists(rep)) {
      entry["report"] = read_json(rep);
      const json& r = entry["report"];
      if (r.contains("undefined")) {
        metrics_md += "| " + name + " | undefined: " + r["undefined"].get<std::string>() + " ||||||\n";
      } else {
        const json& b = r["metrics"][0];
        std::string groups;
        for (const auto& [g, v] : b["per_group"].items()) {
          groups += (groups.empty() ? "" : ", ") + g + ": " + fixed4(v.get<double>());
        }
        auto opt = [&](const char* key) { return b.contains(key) ? fixed4(b[key].get<double>()) : std::string("-"); };
        metrics_md += "| " + name + " | " + fixed4(b["overall"].get<double>()) + " | " +
                      fixed4(b["worst_case"].get<double>()) + " | " + fixed4(b["equity_scaled"].get<double>()) +
                      " | " + fixed4(b["gap"].get<double>()) + " | " + opt("mean_psd") + " | " + opt("max_psd") +
                      " | " + groups + " |\n";
      }
    }
    std::string best = "-";
    std::string ran = "-";
    if (fs::exists(rec)) {
      const json r = read_json(rec);
      entry["best_epoch"] = r["best_epoch"];
      entry["epochs_run"] = r["epochs"].size();
      entry["stop_reason"] = r["stop_reason"];
      best = std::to_string(r["best_epoch"].get<int>());
      ran = std::to_string(r["epochs"].size());
    }
    std::string secs = "-";
    if (fs::exists(tim)) {
      const double w = read_json(tim).at("wall_seconds").get<double>();
      entry["wall_seconds"] = w;
      total_seconds += w;
      secs = fixed4(w);
    }
    runtime_md += "| " + name + " | " + secs + " | " + best + " | " + ran + " |\n";
    summary["models"][name] = entry;
  }
  runtime_md += "| total | " + fixed4(total_seconds) + " | | |\n";
  summary["total_wall_seconds"] = total_seconds;
  summary["missing"] = missing;
  md += metrics_md + "\n" + runtime_md;
  if (!missing.empty()) {
    md += "\n## Missing files\n\n";
    for (const auto& m : missing) md += "- " + m + "\n";
  }

  const fs::path dest = out_arg.empty() ? dir : prepare_dir(out_arg, "report");
  write_text_file(dest / "summary.md", md);
  write_json(dest / "summary.json", summary);
  if (!missing.empty()) {
    err << "error: missing files in " << dir.string() << ":\n";
    for (const auto& m : missing) err << "  " << m << "\n";
    return 1;
  }
  out << "wrote " << (dest / "summary.md").string() << "\n";
  return 0;
}

}  // namespace

fs::path default_output_root() {
  const char* env = std::getenv("FAIRDI_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("fairdi-out");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fairness-aware distillation toolkit"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic biased benchmark");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--config", gen.config, "Generator spec JSON")->check(CLI::ExistingFile);
  g->add_option("--n-samples", gen.spec.n_samples, "Number of samples");
  g->add_option("--n-features", gen.spec.n_features, "Feature count (flat mode)");
  g->add_option("--image-side", gen.spec.image_side, "Image side; > 0 selects image mode");
  g->add_option("--groups", gen.spec.n_groups, "Number of attribute groups");
  g->add_option("--proportions", gen.spec.group_proportions, "Group proportions");
  g->add_option("--separation", gen.spec.base_separation, "Class-mean separation of group 0");
  g->add_option("--bias", gen.spec.bias_strength, "Planted bias strength");
  g->add_option("--noise", gen.spec.label_noise, "Label-flip rate of group 0");
  g->add_option("--rotation", gen.spec.max_rotation, "Direction rotation at full difficulty (radians)");
  g->add_option("--shift", gen.spec.group_shift, "Group mean shift at full difficulty");
  g->add_option("--seed", gen.spec.seed, "Random seed");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train erm, fis or the full fairdi pipeline");
  t->add_option("--dataset", tr.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--method", tr.method, "erm, fis or fairdi")->check(CLI::IsMember({"erm", "fis", "fairdi"}));
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--config", tr.config, "Experiment config JSON")->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed, "Master seed (split, init, sampling)");
  t->add_option("--max-epochs", tr.max_epochs, "Epoch budget per stage");
  t->add_option("--patience", tr.patience, "Early-stopping patience");
  t->add_option("--batch-size", tr.batch_size, "Batch size");
  t->add_option("--lr", tr.lr, "Learning rate of erm / stage 0");
  t->add_option("--head-lr", tr.head_lr, "Learning rate of teachers and student");
  t->add_option("--c", tr.c, "FIS mixing weight for stage 0 and the student");
  t->add_option("--lambda", tr.lambda, "Distillation weight");
  t->add_option("--tau", tr.tau, "Distillation temperature");
  t->add_option("--cutmix-prob", tr.cutmix_prob, "Probability of mixing a batch");
  t->add_option("--cutmix-beta", tr.cutmix_beta, "Beta parameter of the mixing ratio");
  t->add_option("--kl-direction", tr.kl_direction, "student_first or teacher_first")
      ->check(CLI::IsMember({"student_first", "teacher_first"}));
  t->add_flag("--sequential-teachers", tr.sequential_teachers, "Train teachers one after another");
  t->add_option("--ratios", tr.ratios, "Train/val/test ratios")->expected(3);

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Compute fairness metrics");
  e->add_option("--predictions", ev.predictions, "Predictions CSV (id,score,label,attribute)")
      ->check(CLI::ExistingFile);
  e->add_option("--group-values", ev.group_values, "Per-group scores CSV (task,overall,group,value)")
      ->check(CLI::ExistingFile);
  e->add_option("--seg-index", ev.seg_index, "Segmentation index CSV (id,pred_path,truth_path,attribute)")
      ->check(CLI::ExistingFile);
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Dataset CSV for --checkpoint")->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  e->add_option("--seed", ev.seed, "Split seed (the training seed)");
  e->add_option("--ratios", ev.ratios, "Train/val/test ratios")->expected(3);
  e->add_option("--out", ev.out, "Output directory");

  StatsOptions st;
  auto* s = app.add_subcommand("stats", "Friedman test, Nemenyi CD and CD-diagram data");
  s->add_option("--scores", st.scores, "Scores CSV: task column, then one column per algorithm")
      ->required()
      ->check(CLI::ExistingFile);
  s->add_option("--alpha", st.alpha, "Significance level (0.05 or 0.10)");
  s->add_flag("--lower-is-better", st.lower_is_better, "Rank ascending scores first");
  s->add_option("--out", st.out, "Output directory");

  std::string report_dir;
  std::string report_out;
  auto* r = app.add_subcommand("report", "Summarize a training run directory");
  r->add_option("--dir", report_dir, "Run directory")->required();
  r->add_option("--out", report_out, "Where to write the summary (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }

  try {
    if (g->parsed()) return cmd_generate(gen, *g, out);
    if (t->parsed()) return cmd_train(tr, *t, out, err);
    if (e->parsed()) return cmd_evaluate(ev, out, err);
    if (s->parsed()) return cmd_stats(st, out);
    if (r->parsed()) return cmd_report(report_dir, report_out, out, err);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace fairdi
