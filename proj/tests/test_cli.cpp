//
// SPDX-License-Identifier: Apache-2.0
//

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support.hpp"
#include "trisec/cli.hpp"

using namespace trisec;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "trisec");
  std::vector<const char *> argv;
  for (const auto &a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path &p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string model() { return testing_support::model_path("cnn_tiny").string(); }
std::string probe(std::size_t i) { return testing_support::probe_path(i).string(); }

std::size_t target_for(std::size_t i) {
  const auto net = testing_support::load_fixture("cnn_tiny");
  return testing_support::paired_target(
      i, argmax(predict(net, testing_support::probe(i))));
}

} // namespace

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run({"eval", "--model", model(), "--image", probe(0), "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, MissingSubcommandOrRequiredOptionIsUsageError) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"attack", "--model", model()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("check-gradients"), std::string::npos);
}

TEST(Cli, BadInputsAreUsageErrors) {
  const auto dir = testing_support::scratch_dir("cli_bad");
  EXPECT_EQ(run({"eval", "--model", "/nonexistent.json", "--image", probe(0)}).code, 2);
  EXPECT_EQ(run({"eval", "--model", model(), "--image", "/nonexistent.png"}).code, 2);
  save_image(Tensor(Shape{1, 10, 10}, 0.5f), dir / "small.png");
  EXPECT_EQ(run({"eval", "--model", model(), "--image", (dir / "small.png").string()}).code, 2);
}

TEST(Cli, EvalPrintsTopFive) {
  const auto r = run({"eval", "--model", model(), "--image", probe(0)});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["top5"].size(), 5u);
  const auto net = testing_support::load_fixture("cnn_tiny");
  const Tensor p = predict(net, testing_support::probe(0));
  EXPECT_EQ(j["predicted_class"].get<std::size_t>(), argmax(p));
  for (std::size_t k = 0; k + 1 < 5; ++k)
    EXPECT_GE(j["top5"][k]["probability"].get<double>(),
              j["top5"][k + 1]["probability"].get<double>());
}

TEST(Cli, AttackWritesArtifactsConsistentWithFiles) {
  const auto dir = testing_support::scratch_dir("cli_attack");
  const auto img = dir / "adv.png", rep = dir / "report.json";
  const auto r = run({"attack", "--model", model(), "--image", probe(1), "--target",
                      std::to_string(target_for(1)), "--out-image", img.string(),
                      "--out-report", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(img));
  const auto j = read_json(rep);
  EXPECT_TRUE(j["success"].get<bool>());
  EXPECT_TRUE(j.contains("inner_iterations_total"));
  EXPECT_TRUE(j.contains("iterations_run"));
  EXPECT_EQ(j["config"]["seed"].get<int>(), 42);
  ASSERT_FALSE(j["trace"].empty());
  EXPECT_TRUE(j["trace"][0].contains("inner_iters"));

  const Tensor x = load_image(probe(1));
  const Tensor adv = load_image(img);
  const auto scores = perceptual_scores(x, adv);
  EXPECT_NEAR(scores.cr, j["final"]["cr"].get<double>(), 1e-3);
  EXPECT_NEAR(scores.ssi, j["final"]["ssi"].get<double>(), 1e-3);
}

TEST(Cli, AttackThatRunsOutOfIterationsExitsOne) {
  const auto dir = testing_support::scratch_dir("cli_attack_fail");
  const auto rep = dir / "report.json";
  const auto r = run({"attack", "--model", model(), "--image", probe(1), "--target",
                      std::to_string(target_for(1)), "--max-outer", "1",
                      "--max-inner", "1", "--out-image", (dir / "adv.png").string(),
                      "--out-report", rep.string()});
  EXPECT_EQ(r.code, 1);
  ASSERT_TRUE(fs::exists(rep));
  EXPECT_FALSE(read_json(rep)["success"].get<bool>());
}

TEST(Cli, AttackOnAlreadyTargetClassIsUsageError) {
  const auto dir = testing_support::scratch_dir("cli_attack_same");
  const auto net = testing_support::load_fixture("cnn_tiny");
  const auto cls = argmax(predict(net, testing_support::probe(1)));
  const auto r = run({"attack", "--model", model(), "--image", probe(1), "--target",
                      std::to_string(cls), "--out-image", (dir / "adv.png").string(),
                      "--out-report", (dir / "r.json").string()});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, FgsmAndLbfgsReports) {
  const auto dir = testing_support::scratch_dir("cli_baselines");
  auto r = run({"fgsm", "--model", model(), "--image", probe(0), "--if", "0.0001",
                "--out-image", (dir / "f.png").string(), "--out-report",
                (dir / "f.json").string()});
  EXPECT_EQ(r.code, 1) << r.err; // far too small a step to change the class
  auto j = read_json(dir / "f.json");
  EXPECT_EQ(j["attack"], "fgsm");
  EXPECT_FALSE(j["success"].get<bool>());
  EXPECT_TRUE(j["target_class"].is_null());

  r = run({"lbfgs", "--model", model(), "--image", probe(0), "--target",
           std::to_string(target_for(0)), "--out-image", (dir / "l.png").string(),
           "--out-report", (dir / "l.json").string()});
  j = read_json(dir / "l.json");
  EXPECT_EQ(r.code, j["success"].get<bool>() ? 0 : 1);
  EXPECT_EQ(j["attack"], "lbfgs");
  EXPECT_TRUE(fs::exists(dir / "l.png"));
}

TEST(Cli, SweepWritesCsvAndJson) {
  const auto dir = testing_support::scratch_dir("cli_sweep");
  const auto r = run({"sweep", "--model", model(), "--image", probe(0), "--target",
                      std::to_string(target_for(0)), "--if", "1,0.1,0.01,0.001,0.0001",
                      "--out-csv", (dir / "s.csv").string(), "--out-json",
                      (dir / "s.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "if,attack,success,cr,ssi,predicted_class,target_confidence");
  std::size_t rows = 0;
  while (std::getline(in, line))
    rows += !line.empty();
  EXPECT_EQ(rows, 10u);
  EXPECT_EQ(read_json(dir / "s.json")["rows"].size(), 10u);
  EXPECT_EQ(run({"sweep", "--model", model(), "--image", probe(0), "--target", "1",
                 "--if", "1,abc", "--out-csv", (dir / "t.csv").string()})
                .code,
            2);
}

TEST(Cli, CheckGradientsPassesOnEveryFixture) {
  for (const char *stem : {"mlp_tiny", "cnn_tiny", "mixed_tiny"}) {
    const auto r = run({"check-gradients", "--model",
                        testing_support::model_path(stem).string(), "--probes", "100"});
    EXPECT_EQ(r.code, 0) << stem << '\n' << r.out << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["checked"].get<int>(), 100);
  }
}
