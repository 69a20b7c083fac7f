#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fedhpo/dataset.hpp"
#include "fedhpo/model.hpp"

namespace fedhpo {

// Learning-rate source: one shared eta, or one per client.
struct EtaSource {
  bool per_client = false;
  double global_eta = 0.01;
  std::map<int, double> client_eta;

  static EtaSource global(double eta) {
    EtaSource s;
    s.global_eta = eta;
    return s;
  }
  static EtaSource local(std::map<int, double> etas) {
    EtaSource s;
    s.per_client = true;
    s.client_eta = std::move(etas);
    return s;
  }
  double eta_for(int client_id) const;
};

struct FederationConfig {
  int rounds = 10;               // R
  double client_fraction = 1.0;  // C in (0, 1]
  int epochs = 1;                // E, local epochs per round
  int batch_size = 128;          // B
  EtaSource eta;
  std::uint64_t seed = 0;
  bool dropout = true;
  bool parallel_clients = false;  // run client updates concurrently
};

void validate(const FederationConfig& cfg);

// Clients allowed to exchange model knowledge; federation runs per cohort.
struct Cohort {
  int cohort_id = 0;
  std::vector<int> members;  // unique, in member order
};

void validate(const Cohort& cohort);

struct RoundLog {
  int round = 0;
  std::vector<int> participants;
  std::map<int, double> train_loss;      // participants, post-update
  std::map<int, double> valid_accuracy;  // every member, aggregated model
  std::vector<int> diverged;             // clients that contributed round-start weights
};

// Uniform sampling without replacement; max(floor(C*|members|), 1) clients,
// returned in member order. Deterministic per (seed, round).
std::vector<int> select_clients(const Cohort& cohort, double fraction,
                                std::uint64_t seed, int round);

// FedAvg weighted mean, weights n_k / sum n_j, summed in ascending client id
// order for deterministic floating point.
ParamVector aggregate(const std::vector<std::pair<int, ParamVector>>& updates,
                      const std::map<int, Eigen::Index>& sizes);

const ClientDataset& client_by_id(const std::vector<ClientDataset>& clients,
                                  int client_id);

struct FedAvgResult {
  ParamVector params;
  std::vector<RoundLog> logs;
  long aggregation_rounds = 0;
  long participant_updates = 0;
};

// R rounds of {select -> client update -> aggregate}. A diverged client
// contributes the round-start weights instead of poisoning the aggregate.
FedAvgResult federated_averaging(const Cohort& cohort,
                                 const FederationConfig& cfg,
                                 const ModelSpec& spec,
                                 const std::vector<ClientDataset>& clients,
                                 const ParamVector& w0);

struct BaselineRow {
  int client_id = 0;
  double individual = 0.0;
  double central = 0.0;
  double federated = 0.0;
};

struct BaselineReport {
  int cohort_id = 0;
  std::vector<BaselineRow> rows;
  double mean_individual = 0.0;
  double mean_central = 0.0;
  double mean_federated = 0.0;
};

// Per-client individual model, one central model on the pooled cohort train
// data, and the federated model; all evaluated on the pooled cohort test set.
// Individual and central runs train E*R epochs from the same w0 so total
// compute matches the federated run. Requires a global eta source.
BaselineReport run_baselines(const Cohort& cohort, const FederationConfig& cfg,
                             const ModelSpec& spec,
                             const std::vector<ClientDataset>& clients,
                             const ParamVector& w0);

}  // namespace fedhpo
