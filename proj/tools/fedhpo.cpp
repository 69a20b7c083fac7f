// fedhpo: config-driven federated hyperparameter-optimization experiments.
//
// Subcommands: partition | hpo | baselines | analyze | report.
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "fedhpo/config.hpp"
#include "fedhpo/experiment.hpp"
#include "fedhpo/log.hpp"
#include "fedhpo/stats.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path,
                            "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--set", opts.overrides,
                  "override a config value, key.path=value (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory (default: config `output`)");
  cmd->add_option("--seed", opts.seed, "master seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

fedhpo::ExperimentConfig load(const CommonOpts& opts) {
  std::vector<std::string> overrides = opts.overrides;
  if (opts.seed_set) {
    overrides.push_back("seed=" + std::to_string(opts.seed));
  }
  return fedhpo::load_config(opts.config_path, overrides);
}

std::string out_dir(const CommonOpts& opts, const fedhpo::ExperimentConfig& cfg) {
  return opts.out_dir.empty() ? cfg.out_dir : opts.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated-learning hyperparameter-optimization experiments"};
  app.require_subcommand(1);

  CommonOpts partition_opts, hpo_opts, baseline_opts, analyze_opts;
  std::vector<std::string> analyze_results;
  std::string report_artifact, report_out;

  CLI::App* cmd_partition = app.add_subcommand(
      "partition", "materialize per-client datasets and a skew manifest");
  add_common(cmd_partition, partition_opts);

  CLI::App* cmd_hpo = app.add_subcommand(
      "hpo", "run the configured optimization regime and posterior training");
  add_common(cmd_hpo, hpo_opts);

  CLI::App* cmd_baselines = app.add_subcommand(
      "baselines", "individual vs central vs federated comparison");
  add_common(cmd_baselines, baseline_opts);

  CLI::App* cmd_analyze =
      app.add_subcommand("analyze", "paired t-tests over result tables");
  add_common(cmd_analyze, analyze_opts);
  cmd_analyze->add_option("results", analyze_results,
                          "result CSV files (adds to analysis.results)");

  CLI::App* cmd_report =
      app.add_subcommand("report", "plot-ready CSVs from an artifact directory");
  cmd_report->add_option("artifact", report_artifact, "artifact directory")
      ->required();
  cmd_report->add_option("--out", report_out,
                         "output directory (default: the artifact directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (cmd_partition->parsed()) {
      auto cfg = load(partition_opts);
      fedhpo::run_partition(cfg, out_dir(partition_opts, cfg));
    } else if (cmd_hpo->parsed()) {
      auto cfg = load(hpo_opts);
      auto artifact = fedhpo::run_hpo(cfg, out_dir(hpo_opts, cfg));
      for (const auto& cohort : artifact.cohorts) {
        std::printf("cohort %d: posterior test accuracy %.4f\n",
                    cohort.cohort_id, cohort.posterior_test_accuracy);
      }
    } else if (cmd_baselines->parsed()) {
      auto cfg = load(baseline_opts);
      auto artifact = fedhpo::run_baselines_cmd(cfg, out_dir(baseline_opts, cfg));
      for (const auto& cohort : artifact.cohorts) {
        std::printf(
            "cohort %d: individual %.4f  central %.4f  federated %.4f\n",
            cohort.cohort_id, cohort.mean_individual, cohort.mean_central,
            cohort.mean_federated);
      }
    } else if (cmd_analyze->parsed()) {
      auto cfg = load(analyze_opts);
      auto tests =
          fedhpo::run_analyze(cfg, analyze_results, out_dir(analyze_opts, cfg));
      fedhpo::write_ttest_report(tests, std::cout);
    } else if (cmd_report->parsed()) {
      fedhpo::run_report(report_artifact,
                         report_out.empty() ? report_artifact : report_out);
    }
  } catch (const fedhpo::ConfigError& e) {
    std::fprintf(stderr, "error[config]: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[runtime]: %s\n", e.what());
    return 3;
  }
  return 0;
}
