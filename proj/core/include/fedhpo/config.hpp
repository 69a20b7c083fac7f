#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fedhpo/federation.hpp"
#include "fedhpo/hpo.hpp"
#include "fedhpo/model.hpp"
#include "fedhpo/partition.hpp"
#include "fedhpo/stats.hpp"

namespace fedhpo {

// Invalid configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSource {
  enum class Kind { kSynthetic, kIdx, kCsv };
  Kind kind = Kind::kSynthetic;
  SyntheticSpec synthetic;
  std::string idx_images;
  std::string idx_labels;
  std::string csv_path;
};

struct ModelConfig {
  enum class Kind { kIndustrialPreset, kMlpPreset, kInline };
  Kind kind = Kind::kIndustrialPreset;
  int hidden = 128;          // mlp preset
  ModelSpec inline_spec;     // inline layers

  // Presets take their input width and label count from the dataset.
  ModelSpec resolve(int input_dim, int num_classes) const;
};

enum class LocalEpochRule { kDerived, kExplicit };

struct HpoBlock {
  Regime regime = Regime::kLocal;
  Strategy strategy = Strategy::kGrid;
  Grid grid;
  BOConfig bo;
  W0Policy w0_policy = W0Policy::kPerCandidate;
  LocalEpochRule epoch_rule = LocalEpochRule::kDerived;
  int local_epochs = 0;  // explicit rule only
  // Posterior federated training; by default a copy of the main federation
  // block with any overrides applied.
  FederationConfig posterior;
};

struct AnalysisSpec {
  std::vector<std::pair<Approach, Approach>> comparisons;
  std::vector<int> exclude_clients;
  std::vector<std::string> results_files;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";
  std::optional<DatasetSource> dataset;
  PartitionSpec partition;
  std::map<int, int> cohort_of;  // clientId -> cohortId; empty = all in 0
  ModelConfig model;
  FederationConfig federation;
  HpoBlock hpo;
  AnalysisSpec analysis;

  std::string raw_text;          // verbatim config file bytes
  nlohmann::json effective;      // post-override document

  // Cohorts as ordered (cohort id ascending) groups of client ids.
  std::vector<Cohort> cohorts() const;
};

// Parse + validate. `overrides` are `dotted.path=value` assignments applied
// to the document before validation; values parse as JSON with a string
// fallback.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const nlohmann::json& doc);

nlohmann::json to_json(const ExperimentConfig& cfg);

// Build the dataset named by the config (synthetic, IDX or CSV).
Dataset load_dataset(const DatasetSource& source);

void apply_override(nlohmann::json& doc, const std::string& assignment);

inline HpoConfig make_hpo_config(const HpoBlock& block) {
  HpoConfig cfg;
  cfg.regime = block.regime;
  cfg.strategy = block.strategy;
  cfg.grid = block.grid;
  cfg.bo = block.bo;
  cfg.w0_policy = block.w0_policy;
  return cfg;
}

}  // namespace fedhpo
