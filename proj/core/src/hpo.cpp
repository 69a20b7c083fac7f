#include "fedhpo/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedhpo/rng.hpp"

namespace fedhpo {

namespace {
constexpr const char* kCandidateW0 = "hpo/candidate-w0";
}

void validate(const Grid& grid) {
  if (grid.values.empty()) {
    throw std::invalid_argument("grid: no candidates");
  }
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (!(grid.values[i] > 0.0)) {
      throw std::invalid_argument("grid: candidates must be positive");
    }
    if (i > 0 && !(grid.values[i] > grid.values[i - 1])) {
      throw std::invalid_argument("grid: candidates must be strictly ascending");
    }
  }
}

std::string to_string(Regime r) {
  return r == Regime::kLocal ? "local" : "global";
}

std::string to_string(Strategy s) {
  return s == Strategy::kGrid ? "grid" : "bayesian";
}

std::size_t trace_argmax(const std::vector<TraceEntry>& trace) {
  if (trace.empty()) {
    throw std::invalid_argument("trace: empty");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].accuracy > trace[best].accuracy) best = i;
  }
  return best;
}

ParamVector hpo_candidate_w0(const ModelSpec& spec, std::uint64_t w0_seed,
                             W0Policy policy, int candidate) {
  const int index = policy == W0Policy::kShared ? 0 : candidate;
  return init_params(spec,
                     derive_seed(w0_seed, kCandidateW0,
                                 static_cast<std::uint64_t>(index)));
}

GridSearchResult grid_search_local(int client_id, const ParamVector& w0,
                                   const Grid& grid, const TrainConfig& cfg,
                                   const ModelSpec& spec,
                                   const ClientDataset& client) {
  validate(grid);
  if (client.valid.empty()) {
    throw std::invalid_argument("grid search: client " +
                                std::to_string(client_id) +
                                " has no validation data");
  }
  GridSearchResult res;
  res.all_diverged = true;
  for (double eta : grid.values) {
    TrainConfig tc = cfg;
    tc.learning_rate = eta;
    ClientUpdateResult upd = client_update(client_id, w0, tc, spec, client.train);
    TraceEntry entry;
    entry.eta = eta;
    entry.client_id = client_id;
    entry.diverged = upd.diverged;
    entry.accuracy = upd.diverged ? 0.0 : accuracy(spec, upd.params, client.valid);
    res.all_diverged &= upd.diverged;
    res.trace.push_back(std::move(entry));
  }
  // Ascending grid + stable argmax = ties toward the smallest eta.
  res.eta = res.trace[trace_argmax(res.trace)].eta;
  if (res.all_diverged) res.eta = grid.values.front();
  return res;
}

namespace {

TraceEntry federated_candidate(double eta, const Cohort& cohort,
                               const FederationConfig& fed,
                               const ModelSpec& spec,
                               const std::vector<ClientDataset>& clients,
                               const ParamVector& w0, CommStats* comm) {
  FederationConfig cfg = fed;
  cfg.eta = EtaSource::global(eta);
  FedAvgResult result = federated_averaging(cohort, cfg, spec, clients, w0);
  if (comm != nullptr) {
    comm->aggregation_rounds += result.aggregation_rounds;
    comm->participant_updates += result.participant_updates;
    // Each participant receives the current model at every round.
    comm->broadcasts += result.participant_updates;
  }

  TraceEntry entry;
  entry.eta = eta;
  bool all_diverged = true;
  for (const RoundLog& log : result.logs) {
    all_diverged &= log.diverged.size() == log.participants.size();
  }
  entry.diverged = all_diverged && !result.logs.empty();
  double sum = 0.0;
  for (int id : cohort.members) {
    const ClientDataset& c = client_by_id(clients, id);
    if (c.valid.empty()) {
      throw std::invalid_argument("global hpo: client " + std::to_string(id) +
                                  " has no validation data");
    }
    const double a = accuracy(spec, result.params, c.valid);
    entry.per_client.push_back(a);
    sum += a;
  }
  entry.accuracy = sum / static_cast<double>(cohort.members.size());
  return entry;
}

}  // namespace

GridSearchResult grid_search_global(const Cohort& cohort, const Grid& grid,
                                    const FederationConfig& fed,
                                    const ModelSpec& spec,
                                    const std::vector<ClientDataset>& clients,
                                    std::uint64_t w0_seed, W0Policy w0_policy,
                                    CommStats* comm) {
  validate(grid);
  validate(cohort);
  GridSearchResult res;
  res.all_diverged = true;
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const ParamVector w0 =
        hpo_candidate_w0(spec, w0_seed, w0_policy, static_cast<int>(i));
    TraceEntry entry = federated_candidate(grid.values[i], cohort, fed, spec,
                                           clients, w0, comm);
    res.all_diverged &= entry.diverged;
    res.trace.push_back(std::move(entry));
  }
  res.eta = res.trace[trace_argmax(res.trace)].eta;
  if (res.all_diverged) res.eta = grid.values.front();
  return res;
}

BayesResult bayesian_local(int client_id, const ParamVector& w0,
                           const BOConfig& bo, const TrainConfig& cfg,
                           const ModelSpec& spec, const ClientDataset& client) {
  validate(bo);
  if (client.valid.empty()) {
    throw std::invalid_argument("bayesian: client " + std::to_string(client_id) +
                                " has no validation data");
  }
  GPState gp;
  gp.kernel = bo.kernel;
  BayesResult res;

  auto evaluate = [&](double u) {
    const double eta = std::pow(10.0, u);
    TrainConfig tc = cfg;
    tc.learning_rate = eta;
    ClientUpdateResult upd = client_update(client_id, w0, tc, spec, client.train);
    TraceEntry entry;
    entry.eta = eta;
    entry.client_id = client_id;
    entry.diverged = upd.diverged;
    entry.accuracy = upd.diverged ? 0.0 : accuracy(spec, upd.params, client.valid);
    gp.add(u, entry.accuracy);
    res.trace.push_back(std::move(entry));
  };

  for (double u : initial_design(bo)) evaluate(u);
  for (int i = 0; i < bo.n_iter; ++i) {
    evaluate(maximize_acquisition(gp, bo));
  }
  res.eta = res.trace[trace_argmax(res.trace)].eta;
  return res;
}

BayesResult bayesian_global(const Cohort& cohort, const BOConfig& bo,
                            const FederationConfig& fed, const ModelSpec& spec,
                            const std::vector<ClientDataset>& clients,
                            std::uint64_t w0_seed, W0Policy w0_policy,
                            CommStats* comm) {
  validate(bo);
  validate(cohort);
  GPState gp;
  gp.kernel = bo.kernel;
  BayesResult res;
  int candidate = 0;

  auto evaluate = [&](double u) {
    const double eta = std::pow(10.0, u);
    const ParamVector w0 = hpo_candidate_w0(spec, w0_seed, w0_policy, candidate++);
    TraceEntry entry =
        federated_candidate(eta, cohort, fed, spec, clients, w0, comm);
    gp.add(u, entry.accuracy);
    res.trace.push_back(std::move(entry));
  };

  for (double u : initial_design(bo)) evaluate(u);
  for (int i = 0; i < bo.n_iter; ++i) {
    evaluate(maximize_acquisition(gp, bo));
  }
  res.eta = res.trace[trace_argmax(res.trace)].eta;
  return res;
}

HpoOutcome local_hpo(const HpoConfig& hpo,
                     const std::vector<ClientDataset>& clients,
                     const ModelSpec& spec, const ParamVector& w0,
                     const TrainConfig& train) {
  if (clients.empty()) {
    throw std::invalid_argument("local hpo: no clients");
  }
  HpoOutcome out;
  out.regime = Regime::kLocal;
  out.strategy = hpo.strategy;

  // Clients processed in ascending id order; results are order-independent
  // anyway since each client only sees its own data and streams.
  std::vector<const ClientDataset*> ordered;
  for (const auto& c : clients) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return a->client_id < b->client_id;
  });

  for (const ClientDataset* client : ordered) {
    out.comm.broadcasts += 1;  // w0 sent once per client; no aggregation
    if (hpo.strategy == Strategy::kGrid) {
      GridSearchResult r = grid_search_local(client->client_id, w0, hpo.grid,
                                             train, spec, *client);
      if (r.all_diverged) {
        out.warnings.push_back("client " + std::to_string(client->client_id) +
                               ": every grid candidate diverged; defaulting to "
                               "the smallest learning rate");
      }
      out.eta_per_client[client->client_id] = r.eta;
      out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
    } else {
      BayesResult r = bayesian_local(client->client_id, w0, hpo.bo, train,
                                     spec, *client);
      out.eta_per_client[client->client_id] = r.eta;
      out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
    }
  }
  return out;
}

HpoOutcome global_hpo(const HpoConfig& hpo, const Cohort& cohort,
                      const std::vector<ClientDataset>& clients,
                      const ModelSpec& spec, const FederationConfig& fed,
                      std::uint64_t w0_seed) {
  HpoOutcome out;
  out.regime = Regime::kGlobal;
  out.strategy = hpo.strategy;

  if (hpo.strategy == Strategy::kGrid) {
    GridSearchResult r = grid_search_global(cohort, hpo.grid, fed, spec,
                                            clients, w0_seed, hpo.w0_policy,
                                            &out.comm);
    if (r.all_diverged) {
      out.warnings.push_back(
          "every grid candidate diverged; defaulting to the smallest "
          "learning rate");
    }
    out.eta_global = r.eta;
    out.trace = std::move(r.trace);
  } else {
    BayesResult r = bayesian_global(cohort, hpo.bo, fed, spec, clients,
                                    w0_seed, hpo.w0_policy, &out.comm);
    out.eta_global = r.eta;
    out.trace = std::move(r.trace);
  }
  return out;
}

}  // namespace fedhpo
