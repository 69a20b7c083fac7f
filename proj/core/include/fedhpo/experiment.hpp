#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fedhpo/config.hpp"
#include "fedhpo/federation.hpp"
#include "fedhpo/hpo.hpp"
#include "fedhpo/stats.hpp"

namespace fedhpo {

// Per-cohort HPO outcome plus the posterior federated training.
struct CohortHpoResult {
  int cohort_id = 0;
  HpoOutcome outcome;
  std::vector<RoundLog> posterior_logs;
  double posterior_test_accuracy = 0.0;  // pooled cohort test data
};

struct HpoRunArtifact {
  std::vector<CohortHpoResult> cohorts;
  ResultTable results;
  nlohmann::json outcome_json;
};

struct BaselineRunArtifact {
  std::vector<BaselineReport> cohorts;
  ResultTable results;
};

// partition subcommand: one CSV per client split plus a manifest with counts,
// label marginals and skew diagnostics. Returns the manifest.
nlohmann::json run_partition(const ExperimentConfig& cfg,
                             const std::string& out_dir);

// hpo subcommand: per cohort, run the configured regime, train the posterior
// federated model with the selected learning rate(s), and evaluate it on the
// pooled cohort test data. Persists config snapshot, outcome, results and
// round logs under out_dir.
HpoRunArtifact run_hpo(const ExperimentConfig& cfg, const std::string& out_dir);

// baselines subcommand: individual / central / federated accuracy per client
// on the pooled cohort test data.
BaselineRunArtifact run_baselines_cmd(const ExperimentConfig& cfg,
                                      const std::string& out_dir);

// analyze subcommand: merge result tables, run the configured paired t-tests
// and write ttest.json plus a human-readable table.
std::vector<TTestResult> run_analyze(const ExperimentConfig& cfg,
                                     const std::vector<std::string>& result_files,
                                     const std::string& out_dir);

// report subcommand: plot-ready CSVs (clientId,cohortId,approach,accuracy,
// learningRate) from a finished artifact directory.
void run_report(const std::string& artifact_dir, const std::string& out_dir);

// Build dataset + partition + resolve model; shared by the runners above.
struct PreparedExperiment {
  Dataset data;
  std::vector<ClientDataset> clients;
  ModelSpec model;
  std::vector<Cohort> cohorts;
};
PreparedExperiment prepare(const ExperimentConfig& cfg);

nlohmann::json hpo_outcome_to_json(const HpoOutcome& outcome);

}  // namespace fedhpo
