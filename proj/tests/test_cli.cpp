#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairdi/cli.hpp"
#include "fairdi/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fairdi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = fairdi::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fairdi_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json load(const fs::path& p) { return json::parse(fairdi::read_text_file(p)); }

std::string data(const std::string& name) { return std::string(FAIRDI_TEST_DATA) + "/" + name; }

}  // namespace

TEST(CliGenerate, WritesArtifactsDeterministically) {
  const fs::path d = scratch("gen");
  ASSERT_EQ(cli({"generate", "--out", (d / "a").string(), "--n-samples", "300", "--bias", "0.5"}).code, 0);
  ASSERT_EQ(cli({"generate", "--out", (d / "b").string(), "--n-samples", "300", "--bias", "0.5"}).code, 0);
  const std::string a = fairdi::read_text_file(d / "a" / "dataset.csv");
  EXPECT_EQ(a, fairdi::read_text_file(d / "b" / "dataset.csv"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 301);
  const json o = load(d / "a" / "oracle.json");
  EXPECT_GT(o["groups"][0]["bayes_auc"].get<double>(), o["groups"][1]["bayes_auc"].get<double>());
  EXPECT_TRUE(fs::exists(d / "a" / "spec.json"));
}

TEST(CliGenerate, InvalidSpecFails) {
  const fs::path d = scratch("genbad");
  const CliResult r = cli({"generate", "--out", d.string(), "--bias", "2"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("invalid-spec"), std::string::npos);
}

TEST(CliTrain, FairDiArtifactsAndDeterminism) {
  const fs::path d = scratch("train");
  ASSERT_EQ(cli({"generate", "--out", d.string(), "--n-samples", "800"}).code, 0);
  for (const char* run : {"r1", "r2"}) {
    const CliResult r = cli({"train", "--dataset", (d / "dataset.csv").string(), "--method", "fairdi", "--out",
                       (d / run).string(), "--max-epochs", "2", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(d / "r1")) ckpts += e.path().string().ends_with(".ckpt.json");
  EXPECT_EQ(ckpts, 4);  // backbone, 2 teachers, student
  for (const char* f : {"backbone.ckpt.json", "teacher_g0.ckpt.json", "teacher_g1.ckpt.json", "student.ckpt.json",
                        "step0_fis.record.json", "step2_student.record.json"}) {
    EXPECT_EQ(fairdi::read_text_file(d / "r1" / f), fairdi::read_text_file(d / "r2" / f)) << f;
  }

  const CliResult rep = cli({"report", "--dir", (d / "r1").string()});
  EXPECT_EQ(rep.code, 0) << rep.err;
  const json s = load(d / "r1" / "summary.json");
  for (const char* m : {"step0_fis", "step1_teacher_g0", "step1_teacher_g1", "step2_student"})
    EXPECT_TRUE(s["models"][m].contains("wall_seconds")) << m;

  const CliResult ev = cli({"evaluate", "--checkpoint", (d / "r1" / "student.ckpt.json").string(), "--dataset",
                      (d / "dataset.csv").string(), "--seed", "7", "--out", (d / "ev").string()});
  EXPECT_EQ(ev.code, 0) << ev.err;
  const json a = load(d / "ev" / "report.json");
  const json b = load(d / "r1" / "report_step2_student.json");
  EXPECT_EQ(a["metrics"][0]["overall"], b["metrics"][0]["overall"]);
}

TEST(CliTrain, ZeroEpochsKeepsInit) {
  const fs::path d = scratch("train0");
  ASSERT_EQ(cli({"generate", "--out", d.string(), "--n-samples", "200"}).code, 0);
  ASSERT_EQ(cli({"train", "--dataset", (d / "dataset.csv").string(), "--method", "erm", "--out", (d / "r").string(),
                 "--max-epochs", "0"})
                .code,
            0);
  const json rec = load(d / "r" / "erm.record.json");
  EXPECT_EQ(rec["best_epoch"], 0);
  EXPECT_TRUE(rec["epochs"].empty());
}

TEST(CliTrain, ConfigFilePrecedence) {
  const fs::path d = scratch("traincfg");
  ASSERT_EQ(cli({"generate", "--out", d.string(), "--n-samples", "200"}).code, 0);
  fairdi::write_text_file(d / "cfg.json", R"({"seed": 11, "step0_fis": {"max_epochs": 1, "batch_size": 50}})");
  ASSERT_EQ(cli({"train", "--dataset", (d / "dataset.csv").string(), "--method", "fis", "--config",
                 (d / "cfg.json").string(), "--batch-size", "40", "--out", (d / "r").string()})
                .code,
            0);
  const json c = load(d / "r" / "config.json");
  EXPECT_EQ(c["seed"], 11);
  EXPECT_EQ(c["step0_fis"]["max_epochs"], 1);
  EXPECT_EQ(c["step0_fis"]["batch_size"], 40);
}

TEST(CliEvaluate, PredictionsFile) {
  const fs::path d = scratch("evalpred");
  fairdi::write_text_file(d / "p.csv",
                          "id,score,label,attribute\n1,0.1,0,0\n2,0.2,0,0\n3,0.8,1,0\n4,0.9,1,0\n"
                          "5,0.3,0,1\n6,0.6,0,1\n7,0.5,1,1\n8,0.7,1,1\n");
  ASSERT_EQ(cli({"evaluate", "--predictions", (d / "p.csv").string(), "--out", d.string()}).code, 0);
  const json r = load(d / "report.json");
  EXPECT_DOUBLE_EQ(r["metrics"][0]["gap"].get<double>(), 0.25);
  EXPECT_TRUE(fs::exists(d / "roc.csv"));
  EXPECT_TRUE(fs::exists(d / "report.csv"));
}

TEST(CliEvaluate, SingleGroupAndUndefined) {
  const fs::path d = scratch("evalone");
  fairdi::write_text_file(d / "p.csv", "id,score,label,attribute\n1,0.1,0,0\n2,0.7,1,0\n3,0.4,1,0\n");
  ASSERT_EQ(cli({"evaluate", "--predictions", (d / "p.csv").string(), "--out", d.string()}).code, 0);
  EXPECT_EQ(load(d / "report.json")["metrics"][0]["gap"], 0.0);

  fairdi::write_text_file(d / "q.csv", "id,score,label,attribute\n1,0.1,1,0\n2,0.7,1,0\n");
  const CliResult r = cli({"evaluate", "--predictions", (d / "q.csv").string(), "--out", (d / "u").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(load(d / "u" / "report.json").contains("undefined"));
}

TEST(CliEvaluate, GroupValuesFixture) {
  const fs::path d = scratch("evalgv");
  std::string csv = "task,overall,group,value\n";
  const fairdi::CsvTable t = fairdi::read_csv(data("table2_classification.csv"));
  std::vector<std::pair<std::string, double>> expected_es;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row[2] != "FairDi") continue;
    const std::string task = row[0] + "/" + row[1];
    const double mn = std::stod(row[4]), gap = std::stod(row[6]);
    csv += task + "," + row[3] + ",0," + row[4] + "\n";
    csv += task + "," + row[3] + ",1," + fairdi::format_double(mn + gap) + "\n";
    expected_es.emplace_back(task, std::stod(row[5]));
  }
  fairdi::write_text_file(d / "gv.csv", csv);
  ASSERT_EQ(cli({"evaluate", "--group-values", (d / "gv.csv").string(), "--out", d.string()}).code, 0);
  const json r = load(d / "report.json");
  ASSERT_EQ(r["rows"].size(), expected_es.size());
  for (std::size_t i = 0; i < expected_es.size(); ++i) {
    EXPECT_EQ(r["rows"][i]["task"], expected_es[i].first);
    EXPECT_NEAR(r["rows"][i]["equity_scaled"].get<double>(), expected_es[i].second, 5e-4);
  }
}

TEST(CliEvaluate, SegmentationIndex) {
  const fs::path d = scratch("evalseg");
  fairdi::write_text_file(d / "t.pgm", "P2\n4 1\n1\n1 1 0 0\n");
  fairdi::write_text_file(d / "p.pgm", "P2\n4 1\n1\n1 0 0 0\n");
  fairdi::write_text_file(d / "e.csv", "1,4\n0,2\n");
  fairdi::write_text_file(d / "index.csv", "id,pred_path,truth_path,attribute\na,t.pgm,t.pgm,0\nb,p.pgm,e.csv,1\n");
  const CliResult r = cli({"evaluate", "--seg-index", (d / "index.csv").string(), "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = load(d / "report.json");
  EXPECT_EQ(j["metrics"][0]["metric"], "dice");
  EXPECT_DOUBLE_EQ(j["metrics"][0]["per_group"]["1"].get<double>(), 2.0 / 3.0);
}

TEST(CliStats, PaperTasksAndGate) {
  const fs::path d = scratch("stats");
  ASSERT_EQ(cli({"stats", "--scores", data("table2_overall_auc_scores.csv"), "--out", d.string()}).code, 0);
  const json s = load(d / "stats.json");
  EXPECT_NEAR(s["cd"].get<double>(), 1.839, 1e-3);
  EXPECT_NEAR(s["average_ranks"]["FairDi"].get<double>(), 1.55, 5e-3);
  EXPECT_TRUE(fs::exists(d / "ranks.csv"));

  fairdi::write_text_file(d / "flat.csv", "task,A,B,C\nt1,1,1,1\nt2,2,2,2\n");
  ASSERT_EQ(cli({"stats", "--scores", (d / "flat.csv").string(), "--out", (d / "f").string()}).code, 0);
  const json f = load(d / "f" / "stats.json");
  EXPECT_EQ(f["gate"], "failed");
  EXPECT_EQ(f["p_value"], 1.0);

  fairdi::write_text_file(d / "hand.csv", "task,A,B,C\nt1,1,2,3\nt2,1,2,3\nt3,1,2,3\nt4,1,2,3\n");
  ASSERT_EQ(cli({"stats", "--scores", (d / "hand.csv").string(), "--out", (d / "h").string()}).code, 0);
  EXPECT_NEAR(load(d / "h" / "stats.json")["chi2"].get<double>(), 8.0, 1e-12);
}

TEST(CliReport, EmptyDirListsExpectedFiles) {
  const fs::path d = scratch("reportempty");
  const CliResult r = cli({"report", "--dir", d.string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("config.json"), std::string::npos);
}

TEST(CliParse, UnknownSubcommand) {
  EXPECT_NE(cli({"frobnicate"}).code, 0);
  EXPECT_NE(cli({}).code, 0);
}
