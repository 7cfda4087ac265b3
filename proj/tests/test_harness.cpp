#include <nci/harness.hpp>

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sys/wait.h>

using namespace nci;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.gen.dim = 3;
  c.gen.pairs = 30;
  c.methods = {Method::RECI, Method::ANM};
  c.runs = 2;
  c.test_size = 30;
  c.calibration_size = 60;
  c.seed = 17;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NCI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config round trips through JSON") {
    auto c = tiny();
    c.train.lambda_adv = 0.5;
    c.cache_dir = "/tmp/x";
    const auto back = experiment_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.methods == c.methods);
  }

  TEST_CASE("unknown keys and bad values are config errors") {
    CHECK_THROWS_AS(experiment_from_json(nlohmann::json{{"epochs", 3}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(nlohmann::json{{"train", {{"epoch", 3}}}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(nlohmann::json{{"runs", 0}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(nlohmann::json{{"methods", {"SVM"}}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(nlohmann::json{{"gen", {{"dim", "eight"}}}}), ConfigError);
  }

  TEST_CASE("method labels") {
    for (auto m : kAllMethods) CHECK(method_from_label(method_label(m)) == m);
  }

  TEST_CASE("run seeds are distinct across streams, runs and classes") {
    const auto c = tiny();
    std::set<std::uint64_t> seen;
    for (auto s : {streams::kTrain, streams::kTest, streams::kCalibration, streams::kInit})
      for (int r = 0; r < 3; ++r)
        for (auto f : kAllFunctionClasses) seen.insert(lofo_seed(c, s, r, f));
    CHECK(seen.size() == 4 * 3 * 5);
  }

  TEST_CASE("lofo is deterministic and rows are independent") {
    const auto a = run_lofo(tiny());
    const auto b = run_lofo(tiny());
    CHECK(emit_csv(a.table) == emit_csv(b.table));
    auto swapped = tiny();
    swapped.methods = {Method::ANM, Method::RECI};
    const auto c = run_lofo(swapped);
    for (const auto& col : a.table.columns) {
      CHECK(a.table.at("RECI", col).mean == c.table.at("RECI", col).mean);
      CHECK(a.table.at("ANM", col).std == c.table.at("ANM", col).std);
    }
    CHECK(a.table.columns.size() == 6);
  }

  TEST_CASE("consistency suite rejects score methods without a classifier") {
    CHECK_THROWS_AS(make_classifier(Method::ANM, SuiteModels{}), ConfigError);
  }

  TEST_CASE("cli exit codes") {
    const auto dir = std::filesystem::temp_directory_path() / "nci_cli_test";
    std::filesystem::create_directories(dir);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("gen --pairs 1 --out " + dir.string()) == 2);
    {
      std::ofstream bad(dir / "bad.json");
      bad << R"({"runs": 3, "colour": "blue"})";
    }
    CHECK(run_cli("lofo --config " + (dir / "bad.json").string()) == 2);
    CHECK(run_cli("lofo --methods --out " + dir.string()) == 0);
    CHECK(read_text(dir / "lofo.csv").find('\n') == read_text(dir / "lofo.csv").size() - 1);
    CHECK(run_cli("gen -n 3 --dim 2 --pairs 5 --seed 4 --out " + dir.string()) == 0);
    CHECK(std::filesystem::exists(dir / "dataset.ncid"));
    std::filesystem::remove_all(dir);
  }
}
