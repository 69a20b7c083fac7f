#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedhpo/dataset.hpp"
#include "fedhpo/federation.hpp"
#include "fedhpo/gp.hpp"
#include "fedhpo/model.hpp"

namespace fedhpo {

// Learning-rate candidates for grid search.
struct Grid {
  std::vector<double> values{1e-4, 1e-3, 1e-2, 1e-1};
};

void validate(const Grid& grid);  // strictly ascending, positive, non-empty

enum class Regime { kLocal, kGlobal };
enum class Strategy { kGrid, kBayesian };

std::string to_string(Regime r);
std::string to_string(Strategy s);

struct TraceEntry {
  double eta = 0.0;
  int client_id = -1;              // local regime only
  double accuracy = 0.0;           // local: A_eta^k; global: cohort mean
  std::vector<double> per_client;  // global regime: accuracy per member
  bool diverged = false;
};

// Server-client model exchanges, the communication-cost ledger of a run.
struct CommStats {
  long broadcasts = 0;          // start-weight transfers to clients
  long aggregation_rounds = 0;  // FedAvg aggregation barriers
  long participant_updates = 0; // client update uploads
};

struct HpoOutcome {
  Regime regime = Regime::kLocal;
  Strategy strategy = Strategy::kGrid;
  double eta_global = 0.0;               // global regime result
  std::map<int, double> eta_per_client;  // local regime result
  std::vector<TraceEntry> trace;
  CommStats comm;
  std::vector<std::string> warnings;
};

// Start-weight policy for global-regime candidate evaluations.
enum class W0Policy { kPerCandidate, kShared };

struct HpoConfig {
  Regime regime = Regime::kLocal;
  Strategy strategy = Strategy::kGrid;
  Grid grid;
  BOConfig bo;
  W0Policy w0_policy = W0Policy::kPerCandidate;
};

// Index of the best entry: highest accuracy, then earliest evaluation. Used
// by every strategy so ties resolve identically.
std::size_t trace_argmax(const std::vector<TraceEntry>& trace);

struct GridSearchResult {
  double eta = 0.0;
  std::vector<TraceEntry> trace;
  bool all_diverged = false;
};

// Train from w0 with every candidate eta and score validation accuracy;
// argmax with ties toward the smallest eta. If every candidate diverges the
// smallest grid value is returned and flagged.
GridSearchResult grid_search_local(int client_id, const ParamVector& w0,
                                   const Grid& grid, const TrainConfig& cfg,
                                   const ModelSpec& spec,
                                   const ClientDataset& client);

// One FedAvg run per candidate; score = unweighted mean of member validation
// accuracies.
GridSearchResult grid_search_global(const Cohort& cohort, const Grid& grid,
                                    const FederationConfig& fed,
                                    const ModelSpec& spec,
                                    const std::vector<ClientDataset>& clients,
                                    std::uint64_t w0_seed, W0Policy w0_policy,
                                    CommStats* comm);

struct BayesResult {
  double eta = 0.0;
  std::vector<TraceEntry> trace;
};

// GP-guided search over log10(eta): n_init stratified points, then n_iter
// UCB-maximizing evaluations. Returns the evaluated eta with the highest
// observed accuracy (not the GP optimum).
BayesResult bayesian_local(int client_id, const ParamVector& w0,
                           const BOConfig& bo, const TrainConfig& cfg,
                           const ModelSpec& spec, const ClientDataset& client);

BayesResult bayesian_global(const Cohort& cohort, const BOConfig& bo,
                            const FederationConfig& fed, const ModelSpec& spec,
                            const std::vector<ClientDataset>& clients,
                            std::uint64_t w0_seed, W0Policy w0_policy,
                            CommStats* comm);

// LocalHPO: one shared w0, per-client optimization, no federation. The
// caller sets cfg-train epochs to the local budget (E_global * R when
// matching a global run).
HpoOutcome local_hpo(const HpoConfig& hpo,
                     const std::vector<ClientDataset>& clients,
                     const ModelSpec& spec, const ParamVector& w0,
                     const TrainConfig& train);

// GlobalHPO: one eta for the cohort, each candidate evaluated by a full
// FedAvg run. w0 per candidate is derived from (w0_seed, candidate index)
// unless the policy says shared.
HpoOutcome global_hpo(const HpoConfig& hpo, const Cohort& cohort,
                      const std::vector<ClientDataset>& clients,
                      const ModelSpec& spec, const FederationConfig& fed,
                      std::uint64_t w0_seed);

// Start weights for global-regime candidate i under the given policy.
ParamVector hpo_candidate_w0(const ModelSpec& spec, std::uint64_t w0_seed,
                             W0Policy policy, int candidate);

}  // namespace fedhpo
