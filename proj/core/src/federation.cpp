#include "fedhpo/federation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>
#include <string>

#include "fedhpo/rng.hpp"

namespace fedhpo {

namespace {
constexpr const char* kSelectPurpose = "federation/select";
}

double EtaSource::eta_for(int client_id) const {
  if (!per_client) return global_eta;
  auto it = client_eta.find(client_id);
  if (it == client_eta.end()) {
    throw std::invalid_argument("eta source: no learning rate for client " +
                                std::to_string(client_id));
  }
  return it->second;
}

void validate(const FederationConfig& cfg) {
  if (cfg.rounds < 1) {
    throw std::invalid_argument("federation: rounds must be >= 1");
  }
  if (!(cfg.client_fraction > 0.0 && cfg.client_fraction <= 1.0)) {
    throw std::invalid_argument("federation: client fraction must be in (0, 1]");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("federation: epochs and batch size must be >= 1");
  }
}

void validate(const Cohort& cohort) {
  if (cohort.members.empty()) {
    throw std::invalid_argument("cohort: no members");
  }
  std::vector<int> sorted = cohort.members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("cohort: duplicate member ids");
  }
}

std::vector<int> select_clients(const Cohort& cohort, double fraction,
                                std::uint64_t seed, int round) {
  validate(cohort);
  const auto n = cohort.members.size();
  auto m = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n)));
  m = std::max<std::size_t>(m, 1);
  m = std::min(m, n);
  if (m == n) return cohort.members;

  Rng rng = make_rng(seed, kSelectPurpose, static_cast<std::uint64_t>(round));
  std::vector<std::size_t> idx = shuffled_indices(n, rng);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());  // back to member order
  std::vector<int> out;
  out.reserve(m);
  for (std::size_t i : idx) out.push_back(cohort.members[i]);
  return out;
}

ParamVector aggregate(const std::vector<std::pair<int, ParamVector>>& updates,
                      const std::map<int, Eigen::Index>& sizes) {
  if (updates.empty()) {
    throw std::invalid_argument("aggregate: no updates");
  }
  std::vector<const std::pair<int, ParamVector>*> ordered;
  ordered.reserve(updates.size());
  for (const auto& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->first == ordered[i - 1]->first) {
      throw std::invalid_argument("aggregate: duplicate update for client " +
                                  std::to_string(ordered[i]->first));
    }
  }

  double total = 0.0;
  for (const auto* u : ordered) {
    auto it = sizes.find(u->first);
    if (it == sizes.end() || it->second <= 0) {
      throw std::invalid_argument("aggregate: missing or nonpositive size for client " +
                                  std::to_string(u->first));
    }
    total += static_cast<double>(it->second);
  }

  const Eigen::Index dim = ordered.front()->second.size();
  ParamVector result;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const auto& [id, w] = *ordered[i];
    if (w.size() != dim) {
      throw std::invalid_argument(
          "aggregate: update length mismatch for client " + std::to_string(id) +
          " (" + std::to_string(w.size()) + " vs " + std::to_string(dim) + ")");
    }
    const double weight = static_cast<double>(sizes.at(id)) / total;
    if (i == 0) {
      result = weight * w;
    } else {
      result += weight * w;
    }
  }
  return result;
}

const ClientDataset& client_by_id(const std::vector<ClientDataset>& clients,
                                  int client_id) {
  for (const auto& c : clients) {
    if (c.client_id == client_id) return c;
  }
  throw std::invalid_argument("no dataset for client " +
                              std::to_string(client_id));
}

FedAvgResult federated_averaging(const Cohort& cohort,
                                 const FederationConfig& cfg,
                                 const ModelSpec& spec,
                                 const std::vector<ClientDataset>& clients,
                                 const ParamVector& w0) {
  validate(cfg);
  validate(cohort);
  std::map<int, Eigen::Index> train_sizes;
  for (int id : cohort.members) {
    const ClientDataset& c = client_by_id(clients, id);
    if (c.train.empty()) {
      throw std::invalid_argument("federation: client " + std::to_string(id) +
                                  " has no training data");
    }
    train_sizes[id] = c.train.size();
    cfg.eta.eta_for(id);  // fail fast on an incomplete per-client map
  }

  FedAvgResult res;
  res.params = w0;
  res.logs.reserve(static_cast<std::size_t>(cfg.rounds));

  for (int round = 0; round < cfg.rounds; ++round) {
    RoundLog log;
    log.round = round;
    log.participants =
        select_clients(cohort, cfg.client_fraction, cfg.seed, round);

    auto run_one = [&](int id) {
      TrainConfig tc;
      tc.learning_rate = cfg.eta.eta_for(id);
      tc.epochs = cfg.epochs;
      tc.batch_size = cfg.batch_size;
      tc.seed = cfg.seed;
      tc.dropout = cfg.dropout;
      tc.epoch_offset = round * cfg.epochs;
      return client_update(id, res.params, tc, spec,
                           client_by_id(clients, id).train);
    };

    std::vector<std::pair<int, ParamVector>> updates;
    std::vector<std::pair<int, ClientUpdateResult>> outcomes;
    if (cfg.parallel_clients) {
      std::vector<std::future<ClientUpdateResult>> futures;
      futures.reserve(log.participants.size());
      for (int id : log.participants) {
        futures.push_back(
            std::async(std::launch::async, [&run_one, id] { return run_one(id); }));
      }
      for (std::size_t i = 0; i < futures.size(); ++i) {
        outcomes.emplace_back(log.participants[i], futures[i].get());
      }
    } else {
      for (int id : log.participants) {
        outcomes.emplace_back(id, run_one(id));
      }
    }

    for (auto& [id, out] : outcomes) {
      res.participant_updates += 1;
      if (out.diverged) {
        log.diverged.push_back(id);
        updates.emplace_back(id, res.params);  // round-start weights
        log.train_loss[id] = std::numeric_limits<double>::quiet_NaN();
      } else {
        log.train_loss[id] =
            loss(spec, out.params, client_by_id(clients, id).train);
        updates.emplace_back(id, std::move(out.params));
      }
    }

    res.params = aggregate(updates, train_sizes);
    res.aggregation_rounds += 1;

    for (int id : cohort.members) {
      const ClientDataset& c = client_by_id(clients, id);
      if (!c.valid.empty()) {
        log.valid_accuracy[id] = accuracy(spec, res.params, c.valid);
      }
    }
    res.logs.push_back(std::move(log));
  }
  return res;
}

BaselineReport run_baselines(const Cohort& cohort, const FederationConfig& cfg,
                             const ModelSpec& spec,
                             const std::vector<ClientDataset>& clients,
                             const ParamVector& w0) {
  validate(cfg);
  validate(cohort);
  if (cfg.eta.per_client) {
    throw std::invalid_argument("baselines: a global learning rate is required");
  }

  std::vector<const Dataset*> train_parts;
  std::vector<const Dataset*> test_parts;
  for (int id : cohort.members) {
    const ClientDataset& c = client_by_id(clients, id);
    train_parts.push_back(&c.train);
    test_parts.push_back(&c.test);
  }
  const Dataset pooled_train = concat(train_parts);
  const Dataset pooled_test = concat(test_parts);
  if (pooled_test.empty()) {
    throw std::invalid_argument("baselines: pooled cohort test set is empty");
  }

  TrainConfig tc;
  tc.learning_rate = cfg.eta.global_eta;
  tc.epochs = cfg.epochs * cfg.rounds;  // match the federated compute budget
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.dropout = cfg.dropout;

  BaselineReport report;
  report.cohort_id = cohort.cohort_id;

  // Central model: pooled train data as one pseudo-client. Using the lowest
  // member id keeps the single-client cohort identical to its individual run.
  const int central_id =
      *std::min_element(cohort.members.begin(), cohort.members.end());
  ClientUpdateResult central = client_update(central_id, w0, tc, spec, pooled_train);
  const double central_acc =
      central.diverged ? 0.0 : accuracy(spec, central.params, pooled_test);

  FedAvgResult fed = federated_averaging(cohort, cfg, spec, clients, w0);
  const double fed_acc = accuracy(spec, fed.params, pooled_test);

  for (int id : cohort.members) {
    const ClientDataset& c = client_by_id(clients, id);
    ClientUpdateResult indiv = client_update(id, w0, tc, spec, c.train);
    BaselineRow row;
    row.client_id = id;
    row.individual = indiv.diverged ? 0.0 : accuracy(spec, indiv.params, pooled_test);
    row.central = central_acc;
    row.federated = fed_acc;
    report.rows.push_back(row);
    report.mean_individual += row.individual;
  }
  const auto k = static_cast<double>(report.rows.size());
  report.mean_individual /= k;
  report.mean_central = central_acc;
  report.mean_federated = fed_acc;
  return report;
}

}  // namespace fedhpo
