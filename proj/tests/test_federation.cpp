#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "fedhpo/federation.hpp"
#include "fedhpo/partition.hpp"

using namespace fedhpo;

namespace {

bool bit_equal(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Dataset blob_dataset(int n, int classes, std::uint64_t seed,
                     double spread = 2.0) {
  Rng rng = make_rng(seed, "test/fed-blobs");
  Dataset ds;
  ds.num_classes = classes;
  ds.features.resize(n, 4);
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(classes));
    for (int j = 0; j < 4; ++j) {
      ds.features(i, j) = spread * label + rng.normal();
    }
    ds.labels.push_back(label);
  }
  return ds;
}

ClientDataset make_client(int id, const Dataset& data) {
  ClientDataset c;
  c.client_id = id;
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const std::size_t tr = n * 7 / 10;
  const std::size_t va = n * 15 / 100;
  c.train = data.select({rows.begin(), rows.begin() + tr});
  c.valid = data.select({rows.begin() + tr, rows.begin() + tr + va});
  c.test = data.select({rows.begin() + tr + va, rows.end()});
  return c;
}

ModelSpec small_spec() {
  ModelSpec spec;
  spec.layers = {Layer::dense(4, 6), Layer::relu(), Layer::dense(6, 3),
                 Layer::softmax()};
  return spec;
}

Cohort make_cohort(std::vector<int> members) {
  Cohort c;
  c.members = std::move(members);
  return c;
}

}  // namespace

TEST_CASE("select_clients sizes and determinism") {
  Cohort ten = make_cohort({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(select_clients(ten, 1.0, 1, 0) == ten.members);
  CHECK(select_clients(ten, 0.3, 1, 0).size() == 3);

  Cohort five = make_cohort({10, 11, 12, 13, 14});
  CHECK(select_clients(five, 0.01, 1, 0).size() == 1);  // clamped to 1

  const auto a = select_clients(ten, 0.5, 9, 3);
  CHECK(a == select_clients(ten, 0.5, 9, 3));
  CHECK(a != select_clients(ten, 0.5, 9, 4));
  // member order preserved
  CHECK(std::is_sorted(a.begin(), a.end()));
}

TEST_CASE("aggregate computes the weighted mean deterministically") {
  const ParamVector zeros = ParamVector::Zero(5);
  const ParamVector twos = ParamVector::Constant(5, 2.0);
  const ParamVector fours = ParamVector::Constant(5, 4.0);

  std::map<int, Eigen::Index> sizes{{0, 3}, {1, 3}};
  ParamVector mean = aggregate({{0, zeros}, {1, twos}}, sizes);
  CHECK(mean == ParamVector::Constant(5, 1.0));

  sizes = {{0, 1}, {1, 3}};
  mean = aggregate({{0, zeros}, {1, fours}}, sizes);
  CHECK(mean == ParamVector::Constant(5, 3.0));

  // identical updates are a fixed point
  sizes = {{0, 2}, {1, 5}, {2, 7}};
  ParamVector w = ParamVector::LinSpaced(5, -1.0, 1.0);
  CHECK(aggregate({{0, w}, {1, w}, {2, w}}, sizes) == w);
}

TEST_CASE("aggregate validates shapes and participants") {
  std::map<int, Eigen::Index> sizes{{0, 1}, {1, 1}};
  CHECK_THROWS_AS(
      aggregate({{0, ParamVector::Zero(3)}, {1, ParamVector::Zero(4)}}, sizes),
      std::invalid_argument);
  CHECK_THROWS_AS(aggregate({}, sizes), std::invalid_argument);
  CHECK_THROWS_AS(
      aggregate({{0, ParamVector::Zero(3)}, {0, ParamVector::Zero(3)}}, sizes),
      std::invalid_argument);
  CHECK_THROWS_AS(aggregate({{5, ParamVector::Zero(3)}}, sizes),
                  std::invalid_argument);
}

TEST_CASE("aggregate is permutation invariant and idempotent on one update") {
  Rng rng = make_rng(5, "test/agg");
  std::vector<std::pair<int, ParamVector>> updates;
  std::map<int, Eigen::Index> sizes;
  for (int id : {4, 1, 3, 0, 2}) {
    ParamVector w(7);
    for (Eigen::Index i = 0; i < 7; ++i) w[i] = rng.uniform(-1, 1);
    updates.emplace_back(id, w);
    sizes[id] = 1 + static_cast<Eigen::Index>(rng.below(9));
  }
  const ParamVector base = aggregate(updates, sizes);

  std::reverse(updates.begin(), updates.end());
  CHECK(bit_equal(base, aggregate(updates, sizes)));

  std::swap(updates[0], updates[2]);
  CHECK(bit_equal(base, aggregate(updates, sizes)));

  // convexity: every coordinate within participant bounds
  for (Eigen::Index i = 0; i < 7; ++i) {
    double lo = 1e9, hi = -1e9;
    for (const auto& [id, w] : updates) {
      lo = std::min(lo, w[i]);
      hi = std::max(hi, w[i]);
    }
    CHECK(base[i] >= lo - 1e-12);
    CHECK(base[i] <= hi + 1e-12);
  }

  CHECK(bit_equal(updates[0].second,
                  aggregate({updates[0]}, sizes)));
}

TEST_CASE("single-client FedAvg equals sequential training bit for bit") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 61);
  const ClientDataset client = make_client(0, blob_dataset(120, 3, 62));
  Cohort cohort = make_cohort({0});

  FederationConfig cfg;
  cfg.rounds = 5;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.client_fraction = 1.0;
  cfg.eta = EtaSource::global(0.05);
  cfg.seed = 63;

  const FedAvgResult fed = federated_averaging(cohort, cfg, spec, {client}, w0);

  TrainConfig seq;
  seq.learning_rate = 0.05;
  seq.epochs = 5;  // R * E
  seq.batch_size = 16;
  seq.seed = 63;
  const ClientUpdateResult direct = client_update(0, w0, seq, spec, client.train);

  CHECK(bit_equal(fed.params, direct.params));
  CHECK(fed.logs.size() == 5);

  // R=1 degenerate case: output equals a single client update
  cfg.rounds = 1;
  seq.epochs = 1;
  const FedAvgResult one = federated_averaging(cohort, cfg, spec, {client}, w0);
  CHECK(bit_equal(one.params,
                  client_update(0, w0, seq, spec, client.train).params));
}

TEST_CASE("full participation logs every member each round") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 71);
  std::vector<ClientDataset> clients;
  for (int k = 0; k < 3; ++k) {
    clients.push_back(make_client(k, blob_dataset(60, 3, 72 + k)));
  }
  Cohort cohort = make_cohort({0, 1, 2});
  FederationConfig cfg;
  cfg.rounds = 20;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.eta = EtaSource::global(0.02);
  cfg.seed = 73;
  const FedAvgResult res = federated_averaging(cohort, cfg, spec, clients, w0);
  REQUIRE(res.logs.size() == 20);
  for (const RoundLog& log : res.logs) {
    CHECK(log.participants == cohort.members);
    CHECK(log.valid_accuracy.size() == 3);
    CHECK(log.train_loss.size() == 3);
  }
  CHECK(res.aggregation_rounds == 20);
  CHECK(res.participant_updates == 60);
}

TEST_CASE("parallel client execution is bit-identical to serial") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 81);
  std::vector<ClientDataset> clients;
  for (int k = 0; k < 4; ++k) {
    clients.push_back(make_client(k, blob_dataset(80, 3, 82 + k)));
  }
  Cohort cohort = make_cohort({0, 1, 2, 3});
  FederationConfig cfg;
  cfg.rounds = 3;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.eta = EtaSource::global(0.05);
  cfg.seed = 83;

  const FedAvgResult serial = federated_averaging(cohort, cfg, spec, clients, w0);
  cfg.parallel_clients = true;
  const FedAvgResult parallel =
      federated_averaging(cohort, cfg, spec, clients, w0);
  CHECK(bit_equal(serial.params, parallel.params));
}

TEST_CASE("per-client eta map must cover the cohort") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 91);
  std::vector<ClientDataset> clients = {make_client(0, blob_dataset(40, 3, 92)),
                                        make_client(1, blob_dataset(40, 3, 93))};
  Cohort cohort = make_cohort({0, 1});
  FederationConfig cfg;
  cfg.rounds = 1;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.eta = EtaSource::local({{0, 0.01}});  // client 1 missing
  CHECK_THROWS_AS(federated_averaging(cohort, cfg, spec, clients, w0),
                  std::invalid_argument);
}

TEST_CASE("diverging client contributes round-start weights and is logged") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 101);

  // client 1 sees large features with uncorrelated labels and blows up
  ClientDataset healthy = make_client(0, blob_dataset(60, 3, 102));
  Dataset wild;
  {
    Rng rng = make_rng(103, "test/unfittable");
    wild.num_classes = 3;
    wild.features.resize(60, 4);
    for (int i = 0; i < 60; ++i) {
      for (int j = 0; j < 4; ++j) {
        wild.features(i, j) = 400.0 * rng.uniform(-1.0, 1.0);
      }
      wild.labels.push_back(static_cast<int>(rng.below(3)));
    }
  }
  ClientDataset explosive = make_client(1, wild);

  Cohort cohort = make_cohort({0, 1});
  FederationConfig cfg;
  cfg.rounds = 2;
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.eta = EtaSource::global(0.1);
  cfg.seed = 104;
  const FedAvgResult res =
      federated_averaging(cohort, cfg, spec, {healthy, explosive}, w0);
  CHECK(res.params.allFinite());
  bool logged = false;
  for (const RoundLog& log : res.logs) {
    for (int id : log.diverged) logged |= (id == 1);
  }
  CHECK(logged);
}

TEST_CASE("baselines: single-client cohort collapses to one run") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 111);
  const ClientDataset client = make_client(0, blob_dataset(150, 3, 112));
  Cohort cohort = make_cohort({0});
  FederationConfig cfg;
  cfg.rounds = 4;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.eta = EtaSource::global(0.05);
  cfg.seed = 113;
  const BaselineReport rep = run_baselines(cohort, cfg, spec, {client}, w0);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].central == rep.rows[0].individual);
  CHECK(rep.rows[0].federated == rep.rows[0].individual);
}

TEST_CASE("baselines: identical clients agree across regimes") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 121);
  const Dataset base = blob_dataset(600, 3, 122, 3.0);
  std::vector<ClientDataset> clients;
  for (int k = 0; k < 3; ++k) {
    ClientDataset c = make_client(k, base);
    c.client_id = k;
    clients.push_back(std::move(c));
  }
  Cohort cohort = make_cohort({0, 1, 2});
  FederationConfig cfg;
  cfg.rounds = 20;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.eta = EtaSource::global(0.2);
  cfg.seed = 123;
  const BaselineReport rep = run_baselines(cohort, cfg, spec, clients, w0);
  CHECK(std::abs(rep.mean_individual - rep.mean_central) < 0.02);
  CHECK(std::abs(rep.mean_federated - rep.mean_central) < 0.02);
}

TEST_CASE("baselines require a global learning rate") {
  const ModelSpec spec = small_spec();
  const ParamVector w0 = init_params(spec, 131);
  const ClientDataset client = make_client(0, blob_dataset(50, 3, 132));
  FederationConfig cfg;
  cfg.eta = EtaSource::local({{0, 0.01}});
  CHECK_THROWS_AS(run_baselines(make_cohort({0}), cfg, spec, {client}, w0),
                  std::invalid_argument);
}
