#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cohortmt/common.hpp"
#include "cohortmt/pipeline.hpp"

using namespace cohortmt;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& dir) {
  ExperimentConfig c;
  c.stage_dir = dir;
  c.synth_n = 260;
  c.embedding_sizes = {6};
  c.ae_max_epochs = 3;
  c.k_candidates = {2};
  c.gmm_restarts = 3;
  c.trunk_grid = {8};
  c.global_dense_grid = {6};
  c.mt_head_grid = {6};
  c.pred_max_epochs = 3;
  c.n_bootstrap = 15;
  c.min_positives = 1;
  c.seed = 77;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config validation") {
  ExperimentConfig c = tiny_config("x");
  CHECK_NOTHROW(c.validate());

  SUBCASE("unsupported window/gap") {
    c.window_hours = 24;
    c.gap_hours = 24;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("unknown model variant") {
    c.variant = "stacking";
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("multitask heads may not out-size the global dense layer") {
    c.mt_head_grid = {64};
    c.global_dense_grid = {16};
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("unknown plot feature") {
    c.plot_features = {"blood_sugar"};
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("bad threshold mode") {
    c.threshold_mode = "train";
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("config digest ignores the stage directory but not parameters") {
  auto a = tiny_config("one");
  auto b = tiny_config("two");
  CHECK(a.digest() == b.digest());
  b.seed = 78;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("config files round-trip") {
  std::string path = fs::temp_directory_path() / "cohortmt_cfg_test.json";
  auto c = tiny_config("dir");
  {
    std::ofstream f(path);
    f << c.to_json_string();
  }
  auto back = ExperimentConfig::from_file(path);
  CHECK(back.digest() == c.digest());
  CHECK(back.synth_n == 260);
  fs::remove(path);
}

TEST_CASE("stages gate on upstream artifacts and config identity") {
  std::string dir = fs::temp_directory_path() / "cohortmt_pipe_test";
  fs::remove_all(dir);
  auto cfg = tiny_config(dir);
  Pipeline pipe(cfg);

  CHECK_THROWS_AS(pipe.run_embed(), MissingUpstream);
  pipe.run_synth();
  pipe.run_ingest();
  pipe.run_embed();
  CHECK_THROWS_AS(pipe.run_train(), MissingUpstream);
  pipe.run_cluster();
  pipe.run_train();
  pipe.run_evaluate();
  pipe.run_report();
  for (const char* f : {"raw_episodes.csv", "embeddings.csv", "gmm.json",
                        "models.json", "predictions.csv", "evaluation.json",
                        "report.txt", "report.json"})
    CHECK(fs::exists(dir + "/" + f));

  // a different config must not reuse this stage directory
  auto other = cfg;
  other.seed = 123;
  CHECK_THROWS_AS(Pipeline{other}, ConfigError);

  // reruns without --force leave artifacts byte-identical
  auto report_before = slurp(dir + "/report.txt");
  pipe.run_all();
  CHECK(slurp(dir + "/report.txt") == report_before);

  // forced rerun of the deterministic tail reproduces the same bytes
  pipe.run_evaluate(true);
  pipe.run_report(true);
  CHECK(slurp(dir + "/report.txt") == report_before);
  fs::remove_all(dir);
}

TEST_CASE("centroid artifacts are written for the configured features") {
  std::string dir = fs::temp_directory_path() / "cohortmt_pipe_plots";
  fs::remove_all(dir);
  auto cfg = tiny_config(dir);
  cfg.plot_features = {"heart_rate", "lactate"};
  Pipeline pipe(cfg);
  pipe.run_all();
  CHECK(fs::exists(dir + "/centroids/centroids.csv"));
  CHECK(fs::exists(dir + "/centroids/heart_rate.svg"));
  CHECK(fs::exists(dir + "/centroids/lactate.svg"));
  fs::remove_all(dir);
}
