#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "cohortmt/common.hpp"
#include "cohortmt/pipeline.hpp"

using namespace cohortmt;

int main(int argc, char** argv) {
  CLI::App app{"Cohort discovery and multi-task mortality prediction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stage_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--stage-dir", stage_dir, "Artifact directory (overrides config)");
  app.add_option("--seed", seed, "Master seed (overrides config)");
  app.add_flag("--force", force, "Re-run the stage even if its artifacts exist");

  const char* stages[] = {"synth",  "ingest",   "embed",  "cluster",
                          "train",  "evaluate", "report", "run"};
  for (const char* s : stages) app.add_subcommand(s);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty()
                               ? ExperimentConfig{}
                               : ExperimentConfig::from_file(config_path);
    if (!stage_dir.empty()) cfg.stage_dir = stage_dir;
    if (seed) cfg.seed = *seed;
    Pipeline pipe(cfg);

    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") pipe.run_synth(force);
    else if (name == "ingest") pipe.run_ingest(force);
    else if (name == "embed") pipe.run_embed(force);
    else if (name == "cluster") pipe.run_cluster(force);
    else if (name == "train") pipe.run_train(force);
    else if (name == "evaluate") pipe.run_evaluate(force);
    else if (name == "report") pipe.run_report(force);
    else pipe.run_all(force);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingUpstream& e) {
    std::cerr << "error: " << e.what() << " (run it first)\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
