#include "fedhpo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fedhpo/log.hpp"
#include "fedhpo/rng.hpp"

namespace fedhpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kHpoW0 = "experiment/hpo-w0";
constexpr const char* kPosteriorW0 = "experiment/posterior-w0";
constexpr const char* kBaselineW0 = "experiment/baseline-w0";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(path.string() + ": cannot open for writing");
  }
  out << text;
}

void write_json(const fs::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) {
    throw std::runtime_error(dir + ": cannot create output directory: " +
                             ec.message());
  }
  return p;
}

Approach regime_approach(Regime regime, Strategy strategy) {
  if (regime == Regime::kGlobal) {
    return strategy == Strategy::kGrid ? Approach::kGlobalGrid
                                       : Approach::kGlobalBayes;
  }
  return strategy == Strategy::kGrid ? Approach::kLocalGrid
                                     : Approach::kLocalBayes;
}

void write_round_logs_csv(const fs::path& path,
                          const std::vector<std::pair<int, const std::vector<RoundLog>*>>& cohorts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(path.string() + ": cannot open for writing");
  }
  out << "cohortId,round,clientId,participated,trainLoss,validAccuracy\n";
  for (const auto& [cohort_id, logs] : cohorts) {
    for (const RoundLog& log : *logs) {
      std::set<int> part(log.participants.begin(), log.participants.end());
      for (const auto& [id, acc] : log.valid_accuracy) {
        out << cohort_id << ',' << log.round << ',' << id << ','
            << (part.count(id) ? 1 : 0) << ',';
        auto it = log.train_loss.find(id);
        if (it != log.train_loss.end()) {
          out << (std::isnan(it->second) ? "nan" : fmt(it->second));
        }
        out << ',' << fmt(acc) << "\n";
      }
    }
  }
}

Dataset pooled_test(const Cohort& cohort,
                    const std::vector<ClientDataset>& clients) {
  std::vector<const Dataset*> parts;
  for (int id : cohort.members) {
    parts.push_back(&client_by_id(clients, id).test);
  }
  return concat(parts);
}

json timing_json(std::chrono::steady_clock::time_point start) {
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  json j;
  j["elapsedMs"] = elapsed.count();
  return j;
}

void write_config_snapshot(const ExperimentConfig& cfg, const fs::path& dir) {
  if (!cfg.raw_text.empty()) {
    write_text(dir / "config.json", cfg.raw_text);
  }
  write_json(dir / "effective_config.json", cfg.effective);
}

}  // namespace

PreparedExperiment prepare(const ExperimentConfig& cfg) {
  if (!cfg.dataset.has_value()) {
    throw ConfigError("config: this command needs a `dataset` block");
  }
  PreparedExperiment prep;
  prep.data = load_dataset(*cfg.dataset);
  prep.clients = partition(prep.data, cfg.partition);
  prep.model = cfg.model.resolve(static_cast<int>(prep.data.dim()),
                                 prep.data.num_classes);
  prep.cohorts = cfg.cohorts();
  for (const Cohort& c : prep.cohorts) {
    for (int id : c.members) {
      if (id < 0 || id >= cfg.partition.client_count) {
        throw ConfigError("cohorts: client " + std::to_string(id) +
                          " outside the partition's client range");
      }
    }
  }
  return prep;
}

json run_partition(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  PreparedExperiment prep = prepare(cfg);
  const fs::path dir = ensure_dir(out_dir);

  json manifest;
  manifest["scheme"] = cfg.effective.contains("partition")
                           ? cfg.effective["partition"].value("scheme", "iid")
                           : "iid";
  manifest["clients"] = json::array();
  for (const ClientDataset& c : prep.clients) {
    char name[64];
    std::snprintf(name, sizeof name, "client%03d", c.client_id);
    save_csv(c.train, (dir / (std::string(name) + "_train.csv")).string());
    save_csv(c.valid, (dir / (std::string(name) + "_valid.csv")).string());
    save_csv(c.test, (dir / (std::string(name) + "_test.csv")).string());

    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(prep.data.num_classes);
    auto count = [&](const Dataset& ds) {
      for (int y : ds.labels) marginal[y] += 1.0;
    };
    count(c.train);
    count(c.valid);
    count(c.test);
    marginal /= static_cast<double>(c.n_k());

    json cj;
    cj["id"] = c.client_id;
    cj["train"] = c.train.size();
    cj["valid"] = c.valid.size();
    cj["test"] = c.test.size();
    cj["n_k"] = c.n_k();
    cj["labelMarginal"] = std::vector<double>(
        marginal.data(), marginal.data() + marginal.size());
    manifest["clients"].push_back(cj);
  }

  const SkewReport skew = skew_diagnostics(prep.clients, 16);
  json sj;
  sj["maxLabelTV"] = skew.max_label_tv;
  sj["maxFeatureTV"] = skew.max_feature_tv;
  sj["quantityRatio"] = skew.quantity_ratio;
  sj["labelSkew"] = skew.label_skew;
  sj["featureSkew"] = skew.feature_skew;
  sj["quantitySkew"] = skew.quantity_skew;
  manifest["skew"] = sj;

  write_json(dir / "manifest.json", manifest);
  write_config_snapshot(cfg, dir);
  write_json(dir / "run_meta.json", timing_json(start));
  return manifest;
}

json hpo_outcome_to_json(const HpoOutcome& outcome) {
  json j;
  j["regime"] = to_string(outcome.regime);
  j["strategy"] = to_string(outcome.strategy);
  if (outcome.regime == Regime::kGlobal) {
    j["result"] = {{"global", outcome.eta_global}};
  } else {
    json per;
    for (const auto& [id, eta] : outcome.eta_per_client) {
      per[std::to_string(id)] = eta;
    }
    j["result"] = {{"perClient", per}};
  }
  j["trace"] = json::array();
  for (const TraceEntry& e : outcome.trace) {
    json t;
    t["eta"] = e.eta;
    t["accuracy"] = e.accuracy;
    t["diverged"] = e.diverged;
    if (e.client_id >= 0) t["clientId"] = e.client_id;
    if (!e.per_client.empty()) t["perClient"] = e.per_client;
    j["trace"].push_back(t);
  }
  j["comm"] = {{"broadcasts", outcome.comm.broadcasts},
               {"aggregationRounds", outcome.comm.aggregation_rounds},
               {"participantUpdates", outcome.comm.participant_updates}};
  j["warnings"] = outcome.warnings;
  return j;
}

HpoRunArtifact run_hpo(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  PreparedExperiment prep = prepare(cfg);
  const fs::path dir = ensure_dir(out_dir);

  const Approach approach = regime_approach(cfg.hpo.regime, cfg.hpo.strategy);
  HpoRunArtifact artifact;
  json cohorts_json = json::array();

  for (const Cohort& cohort : prep.cohorts) {
    FEDHPO_LOG_INFO("cohort " + std::to_string(cohort.cohort_id) + ": " +
                    to_string(cfg.hpo.regime) + " " +
                    to_string(cfg.hpo.strategy) + " hpo over " +
                    std::to_string(cohort.members.size()) + " clients");
    CohortHpoResult result;
    result.cohort_id = cohort.cohort_id;

    FederationConfig fed = cfg.federation;
    const std::uint64_t w0_seed =
        derive_seed(cfg.master_seed, kHpoW0,
                    static_cast<std::uint64_t>(cohort.cohort_id));

    std::vector<ClientDataset> member_data;
    for (int id : cohort.members) {
      member_data.push_back(client_by_id(prep.clients, id));
    }

    EtaSource posterior_eta;
    if (cfg.hpo.regime == Regime::kLocal) {
      TrainConfig train;
      train.epochs = cfg.hpo.epoch_rule == LocalEpochRule::kDerived
                         ? fed.epochs * fed.rounds
                         : cfg.hpo.local_epochs;
      train.batch_size = fed.batch_size;
      train.seed = fed.seed;
      train.dropout = fed.dropout;
      const ParamVector w0 =
          hpo_candidate_w0(prep.model, w0_seed, W0Policy::kShared, 0);
      result.outcome =
          local_hpo(make_hpo_config(cfg.hpo), member_data, prep.model, w0, train);
      posterior_eta = EtaSource::local(result.outcome.eta_per_client);
    } else {
      result.outcome = global_hpo(make_hpo_config(cfg.hpo), cohort, member_data,
                                  prep.model, fed, w0_seed);
      posterior_eta = EtaSource::global(result.outcome.eta_global);
    }

    // Posterior federated training with the selected learning rate(s).
    FederationConfig post = cfg.hpo.posterior;
    post.eta = posterior_eta;
    const ParamVector post_w0 = init_params(
        prep.model, derive_seed(cfg.master_seed, kPosteriorW0,
                                static_cast<std::uint64_t>(cohort.cohort_id)));
    FedAvgResult trained =
        federated_averaging(cohort, post, prep.model, member_data, post_w0);
    result.posterior_logs = std::move(trained.logs);
    result.posterior_test_accuracy =
        accuracy(prep.model, trained.params, pooled_test(cohort, member_data));

    for (int id : cohort.members) {
      ResultRow row;
      row.client_id = id;
      row.cohort_id = cohort.cohort_id;
      row.approach = approach;
      row.accuracy = result.posterior_test_accuracy;
      row.learning_rate = posterior_eta.eta_for(id);
      artifact.results.add(row);
    }

    json cj = hpo_outcome_to_json(result.outcome);
    cj["cohortId"] = cohort.cohort_id;
    cj["posteriorTestAccuracy"] = result.posterior_test_accuracy;
    cohorts_json.push_back(cj);
    artifact.cohorts.push_back(std::move(result));
  }

  artifact.outcome_json = json{{"cohorts", cohorts_json}};
  write_json(dir / "hpo_outcome.json", artifact.outcome_json);
  save_result_table(artifact.results, (dir / "results.csv").string());
  std::vector<std::pair<int, const std::vector<RoundLog>*>> log_refs;
  for (const CohortHpoResult& c : artifact.cohorts) {
    log_refs.emplace_back(c.cohort_id, &c.posterior_logs);
  }
  write_round_logs_csv(dir / "round_logs.csv", log_refs);
  write_config_snapshot(cfg, dir);
  write_json(dir / "run_meta.json", timing_json(start));
  return artifact;
}

BaselineRunArtifact run_baselines_cmd(const ExperimentConfig& cfg,
                                      const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  PreparedExperiment prep = prepare(cfg);
  const fs::path dir = ensure_dir(out_dir);

  BaselineRunArtifact artifact;
  json meta;
  meta["learningRate"] = cfg.federation.eta.global_eta;
  json cohorts_json = json::array();

  for (const Cohort& cohort : prep.cohorts) {
    FEDHPO_LOG_INFO("cohort " + std::to_string(cohort.cohort_id) +
                    ": baselines over " +
                    std::to_string(cohort.members.size()) + " clients");
    std::vector<ClientDataset> member_data;
    for (int id : cohort.members) {
      member_data.push_back(client_by_id(prep.clients, id));
    }
    const ParamVector w0 = init_params(
        prep.model, derive_seed(cfg.master_seed, kBaselineW0,
                                static_cast<std::uint64_t>(cohort.cohort_id)));
    BaselineReport report =
        run_baselines(cohort, cfg.federation, prep.model, member_data, w0);
    report.cohort_id = cohort.cohort_id;

    for (const BaselineRow& row : report.rows) {
      for (auto [approach, acc] :
           {std::pair{Approach::kIndividual, row.individual},
            std::pair{Approach::kCentral, row.central},
            std::pair{Approach::kFederated, row.federated}}) {
        ResultRow r;
        r.client_id = row.client_id;
        r.cohort_id = cohort.cohort_id;
        r.approach = approach;
        r.accuracy = acc;
        r.learning_rate = cfg.federation.eta.global_eta;
        artifact.results.add(r);
      }
    }
    json cj;
    cj["cohortId"] = cohort.cohort_id;
    cj["meanIndividual"] = report.mean_individual;
    cj["meanCentral"] = report.mean_central;
    cj["meanFederated"] = report.mean_federated;
    cohorts_json.push_back(cj);
    artifact.cohorts.push_back(std::move(report));
  }

  meta["cohorts"] = cohorts_json;
  write_json(dir / "baseline_meta.json", meta);
  save_result_table(artifact.results, (dir / "results.csv").string());
  write_config_snapshot(cfg, dir);
  write_json(dir / "run_meta.json", timing_json(start));
  return artifact;
}

std::vector<TTestResult> run_analyze(const ExperimentConfig& cfg,
                                     const std::vector<std::string>& result_files,
                                     const std::string& out_dir) {
  std::vector<std::string> files = cfg.analysis.results_files;
  files.insert(files.end(), result_files.begin(), result_files.end());
  if (files.empty()) {
    throw ConfigError("analyze: no result files (analysis.results or arguments)");
  }
  ResultTable table;
  for (const std::string& f : files) {
    append_rows(table, load_result_table(f));
  }

  const std::vector<TTestResult> tests = compare_approaches(
      table, cfg.analysis.comparisons, cfg.analysis.exclude_clients);

  const fs::path dir = ensure_dir(out_dir);
  json out = json::array();
  for (const TTestResult& t : tests) {
    json tj;
    tj["approachA"] = to_string(t.approach_a);
    tj["approachB"] = to_string(t.approach_b);
    tj["t"] = std::isfinite(t.t) ? json(t.t) : json(t.t > 0 ? "inf" : "-inf");
    tj["df"] = t.degrees_of_freedom;
    tj["p"] = t.p;
    tj["pairs"] = t.pair_count;
    tj["degenerate"] = t.degenerate;
    tj["excludedClients"] = t.excluded_clients;
    out.push_back(tj);
  }
  write_json(dir / "ttest.json", out);

  std::ofstream report(dir / "ttest_report.txt", std::ios::binary);
  write_ttest_report(tests, report);

  json summary_json = json::array();
  for (const CohortSummaryRow& row : cohort_summary(table)) {
    json rj;
    rj["cohortId"] = row.cohort_id;
    rj["approach"] = to_string(row.approach);
    rj["clients"] = row.clients;
    rj["mean"] = row.mean;
    rj["min"] = row.min;
    rj["max"] = row.max;
    summary_json.push_back(rj);
  }
  write_json(dir / "cohort_summary.json", summary_json);
  return tests;
}

void run_report(const std::string& artifact_dir, const std::string& out_dir) {
  const fs::path src(artifact_dir);
  const fs::path results_path = src / "results.csv";
  if (!fs::exists(results_path)) {
    throw std::runtime_error(results_path.string() + ": artifact has no results");
  }
  ResultTable table = load_result_table(results_path.string());

  // Learning rates: per (client, approach) from the HPO outcome when present,
  // else the baseline meta's constant rate.
  std::map<std::pair<int, std::string>, double> rates;
  const fs::path outcome_path = src / "hpo_outcome.json";
  if (fs::exists(outcome_path)) {
    std::ifstream in(outcome_path);
    json doc = json::parse(in);
    for (const json& cj : doc.value("cohorts", json::array())) {
      const std::string approach =
          cj.value("regime", "") == "global"
              ? (cj.value("strategy", "") == "grid" ? "globalGrid" : "globalBayes")
              : (cj.value("strategy", "") == "grid" ? "localGrid" : "localBayes");
      const json& result = cj.at("result");
      if (result.contains("global")) {
        for (const ResultRow& r : table.rows) {
          rates[{r.client_id, approach}] = result.at("global").get<double>();
        }
      } else {
        for (auto it = result.at("perClient").begin();
             it != result.at("perClient").end(); ++it) {
          rates[{std::stoi(it.key()), approach}] = it.value().get<double>();
        }
      }
    }
  }
  double baseline_rate = 0.0;
  const fs::path meta_path = src / "baseline_meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    baseline_rate = json::parse(in).value("learningRate", 0.0);
  }

  const fs::path dir = ensure_dir(out_dir);
  const bool any_baseline =
      std::any_of(table.rows.begin(), table.rows.end(), [](const ResultRow& r) {
        return r.approach == Approach::kIndividual ||
               r.approach == Approach::kCentral ||
               r.approach == Approach::kFederated;
      });
  const fs::path out_path =
      dir / (any_baseline ? "report_baselines.csv" : "report_approaches.csv");
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(out_path.string() + ": cannot open for writing");
  }
  out << "clientId,cohortId,approach,accuracy,learningRate\n";
  for (const ResultRow& r : table.rows) {
    const std::string name = to_string(r.approach);
    double rate = baseline_rate;
    auto it = rates.find({r.client_id, name});
    if (it != rates.end()) rate = it->second;
    out << r.client_id << ',' << r.cohort_id << ',' << name << ','
        << fmt(r.accuracy) << ',' << fmt(rate) << "\n";
  }
}

}  // namespace fedhpo
