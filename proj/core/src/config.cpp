#include "fedhpo/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fedhpo {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

const json& need(const json& obj, const std::string& where,
                 const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, "missing key `" + key + "`");
  return *it;
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key,
         T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    fail(where + "." + key, e.what());
  }
}

template <typename T>
T as(const json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    fail(where, e.what());
  }
}

void check_file_exists(const std::string& where, const std::string& path) {
  if (!std::filesystem::exists(path)) {
    fail(where, "referenced path does not exist: " + path);
  }
}

DatasetSource parse_dataset(const json& j) {
  DatasetSource src;
  const std::string type = as<std::string>(need(j, "dataset", "type"), "dataset.type");
  const std::set<std::string> synthetic_only = {
      "numClasses", "featureDim", "samplesPerClassPerClient",
      "meanRange", "clusterStd", "seed"};
  const std::set<std::string> idx_only = {"images", "labels"};
  const std::set<std::string> csv_only = {"path"};

  auto reject_foreign = [&](const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "type") continue;
      if (allowed.count(it.key()) == 0) {
        fail("dataset", "key `" + it.key() + "` does not belong to type `" +
                            type + "` (exactly one dataset source)");
      }
    }
  };

  if (type == "synthetic") {
    reject_foreign(synthetic_only);
    src.kind = DatasetSource::Kind::kSynthetic;
    src.synthetic.num_classes = get_or(j, "dataset", "numClasses", 6);
    src.synthetic.feature_dim = get_or(j, "dataset", "featureDim", 24);
    src.synthetic.samples_per_class_per_client =
        get_or(j, "dataset", "samplesPerClassPerClient", 512);
    src.synthetic.mean_range = get_or(j, "dataset", "meanRange", 2.0);
    src.synthetic.cluster_std = get_or(j, "dataset", "clusterStd", 1.0);
  } else if (type == "idx") {
    reject_foreign(idx_only);
    src.kind = DatasetSource::Kind::kIdx;
    src.idx_images = as<std::string>(need(j, "dataset", "images"), "dataset.images");
    src.idx_labels = as<std::string>(need(j, "dataset", "labels"), "dataset.labels");
    check_file_exists("dataset.images", src.idx_images);
    check_file_exists("dataset.labels", src.idx_labels);
  } else if (type == "csv") {
    reject_foreign(csv_only);
    src.kind = DatasetSource::Kind::kCsv;
    src.csv_path = as<std::string>(need(j, "dataset", "path"), "dataset.path");
    check_file_exists("dataset.path", src.csv_path);
  } else {
    fail("dataset.type", "unknown type `" + type + "` (synthetic|idx|csv)");
  }
  return src;
}

PartitionSpec parse_partition(const json& j) {
  PartitionSpec spec;
  const std::string scheme =
      get_or<std::string>(j, "partition", "scheme", "iid");
  spec.client_count = get_or(j, "partition", "clients", 2);
  if (j.contains("splitRatios")) {
    const auto r = as<std::vector<double>>(j.at("splitRatios"),
                                           "partition.splitRatios");
    if (r.size() != 3) {
      fail("partition.splitRatios", "expected [train, valid, test]");
    }
    spec.split = {r[0], r[1], r[2]};
  }

  if (scheme == "iid") {
    spec.scheme = PartitionSpec::Scheme::kIid;
  } else if (scheme == "labelSkew") {
    spec.scheme = PartitionSpec::Scheme::kLabelSkew;
    spec.classes_per_client = get_or(j, "partition", "classesPerClient", 2);
  } else if (scheme == "quantitySkew") {
    spec.scheme = PartitionSpec::Scheme::kQuantitySkew;
    spec.proportions = get_or(j, "partition", "proportions",
                              std::vector<double>{});
  } else if (scheme == "featureSkew") {
    spec.scheme = PartitionSpec::Scheme::kFeatureSkew;
    if (j.contains("featureSkew")) {
      const json& f = j.at("featureSkew");
      spec.feature_skew.rotation_seed =
          get_or<std::uint64_t>(f, "partition.featureSkew", "rotationSeed", 0);
      spec.feature_skew.rotate =
          get_or(f, "partition.featureSkew", "rotate", true);
      spec.feature_skew.scale =
          get_or(f, "partition.featureSkew", "scale", 1.0);
      spec.feature_skew.offset =
          get_or(f, "partition.featureSkew", "offset", 0.0);
    }
  } else if (scheme == "explicit") {
    spec.scheme = PartitionSpec::Scheme::kExplicit;
    spec.assignment_file = as<std::string>(
        need(j, "partition", "assignmentFile"), "partition.assignmentFile");
    check_file_exists("partition.assignmentFile", spec.assignment_file);
    spec.label_flip_clients =
        get_or(j, "partition", "labelFlipClients", std::vector<int>{});
  } else {
    fail("partition.scheme", "unknown scheme `" + scheme + "`");
  }
  return spec;
}

ModelConfig parse_model(const json& j) {
  ModelConfig m;
  if (j.contains("layers")) {
    m.kind = ModelConfig::Kind::kInline;
    for (const json& lj : j.at("layers")) {
      if (lj.contains("dense")) {
        const auto d = as<std::vector<int>>(lj.at("dense"), "model.layers.dense");
        if (d.size() != 2) fail("model.layers.dense", "expected [in, out]");
        m.inline_spec.layers.push_back(Layer::dense(d[0], d[1]));
      } else if (lj.contains("activation")) {
        const auto a = as<std::string>(lj.at("activation"), "model.layers.activation");
        if (a == "relu") {
          m.inline_spec.layers.push_back(Layer::relu());
        } else if (a == "softmax") {
          m.inline_spec.layers.push_back(Layer::softmax());
        } else {
          fail("model.layers.activation", "unknown activation `" + a + "`");
        }
      } else if (lj.contains("dropout")) {
        m.inline_spec.layers.push_back(
            Layer::dropout(as<double>(lj.at("dropout"), "model.layers.dropout")));
      } else {
        fail("model.layers", "layer needs dense | activation | dropout");
      }
    }
    try {
      validate(m.inline_spec);
    } catch (const std::invalid_argument& e) {
      fail("model.layers", e.what());
    }
    return m;
  }
  const std::string preset = get_or<std::string>(j, "model", "preset", "industrial");
  if (preset == "industrial") {
    m.kind = ModelConfig::Kind::kIndustrialPreset;
  } else if (preset == "mlp") {
    m.kind = ModelConfig::Kind::kMlpPreset;
    m.hidden = get_or(j, "model", "hidden", 128);
  } else {
    fail("model.preset", "unknown preset `" + preset + "` (industrial|mlp)");
  }
  return m;
}

FederationConfig parse_federation(const json& j, const std::string& where,
                                  const FederationConfig& base) {
  FederationConfig cfg = base;
  cfg.rounds = get_or(j, where, "rounds", cfg.rounds);
  cfg.client_fraction = get_or(j, where, "clientFraction", cfg.client_fraction);
  cfg.epochs = get_or(j, where, "epochs", cfg.epochs);
  cfg.batch_size = get_or(j, where, "batchSize", cfg.batch_size);
  cfg.dropout = get_or(j, where, "dropout", cfg.dropout);
  cfg.parallel_clients = get_or(j, where, "parallelClients", cfg.parallel_clients);
  if (j.contains("learningRate")) {
    cfg.eta = EtaSource::global(as<double>(j.at("learningRate"), where + ".learningRate"));
  }
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return cfg;
}

HpoBlock parse_hpo(const json& j, const FederationConfig& federation) {
  HpoBlock h;
  h.posterior = federation;
  const std::string regime = get_or<std::string>(j, "hpo", "regime", "global");
  if (regime == "local") {
    h.regime = Regime::kLocal;
  } else if (regime == "global") {
    h.regime = Regime::kGlobal;
  } else {
    fail("hpo.regime", "unknown regime `" + regime + "` (local|global)");
  }
  const std::string strategy = get_or<std::string>(j, "hpo", "strategy", "grid");
  if (strategy == "grid") {
    h.strategy = Strategy::kGrid;
  } else if (strategy == "bayesian") {
    h.strategy = Strategy::kBayesian;
  } else {
    fail("hpo.strategy", "unknown strategy `" + strategy + "` (grid|bayesian)");
  }
  if (j.contains("grid")) {
    h.grid.values = as<std::vector<double>>(j.at("grid"), "hpo.grid");
    try {
      validate(h.grid);
    } catch (const std::invalid_argument& e) {
      fail("hpo.grid", e.what());
    }
  }
  if (j.contains("bo")) {
    const json& b = j.at("bo");
    h.bo.eta_min = get_or(b, "hpo.bo", "etaMin", h.bo.eta_min);
    h.bo.eta_max = get_or(b, "hpo.bo", "etaMax", h.bo.eta_max);
    h.bo.n_init = get_or(b, "hpo.bo", "nInit", h.bo.n_init);
    h.bo.n_iter = get_or(b, "hpo.bo", "nIter", h.bo.n_iter);
    h.bo.ucb_beta = get_or(b, "hpo.bo", "ucbBeta", h.bo.ucb_beta);
    h.bo.kernel.signal_variance =
        get_or(b, "hpo.bo", "signalVariance", h.bo.kernel.signal_variance);
    h.bo.kernel.lengthscale =
        get_or(b, "hpo.bo", "lengthscale", h.bo.kernel.lengthscale);
    h.bo.kernel.noise_variance =
        get_or(b, "hpo.bo", "noiseVariance", h.bo.kernel.noise_variance);
    h.bo.acquisition_grid =
        get_or(b, "hpo.bo", "acquisitionGrid", h.bo.acquisition_grid);
    try {
      validate(h.bo);
    } catch (const std::invalid_argument& e) {
      fail("hpo.bo", e.what());
    }
  }
  const std::string policy =
      get_or<std::string>(j, "hpo", "w0Policy", "perCandidate");
  if (policy == "perCandidate") {
    h.w0_policy = W0Policy::kPerCandidate;
  } else if (policy == "shared") {
    h.w0_policy = W0Policy::kShared;
  } else {
    fail("hpo.w0Policy", "unknown policy `" + policy + "` (perCandidate|shared)");
  }
  if (j.contains("localEpochs")) {
    const json& le = j.at("localEpochs");
    if (le.is_string() && le.get<std::string>() == "derived") {
      h.epoch_rule = LocalEpochRule::kDerived;
    } else if (le.is_number_integer()) {
      h.epoch_rule = LocalEpochRule::kExplicit;
      h.local_epochs = le.get<int>();
      if (h.local_epochs < 1) fail("hpo.localEpochs", "must be >= 1");
    } else {
      fail("hpo.localEpochs", "expected \"derived\" or a positive integer");
    }
  }
  if (j.contains("posterior")) {
    h.posterior = parse_federation(j.at("posterior"), "hpo.posterior", federation);
  }
  return h;
}

AnalysisSpec parse_analysis(const json& j) {
  AnalysisSpec a;
  if (j.contains("comparisons")) {
    for (const json& pj : j.at("comparisons")) {
      const auto pair = as<std::vector<std::string>>(pj, "analysis.comparisons");
      if (pair.size() != 2) {
        fail("analysis.comparisons", "each comparison is [approachA, approachB]");
      }
      try {
        a.comparisons.emplace_back(approach_from_string(pair[0]),
                                   approach_from_string(pair[1]));
      } catch (const std::invalid_argument& e) {
        fail("analysis.comparisons", e.what());
      }
    }
  }
  a.exclude_clients = get_or(j, "analysis", "exclude", std::vector<int>{});
  a.results_files = get_or(j, "analysis", "results", std::vector<std::string>{});
  return a;
}

}  // namespace

ModelSpec ModelConfig::resolve(int input_dim, int num_classes) const {
  switch (kind) {
    case Kind::kIndustrialPreset:
      return industrial_spec(input_dim, num_classes);
    case Kind::kMlpPreset:
      return mlp_spec(input_dim, hidden, num_classes);
    case Kind::kInline:
      if (inline_spec.input_dim() != input_dim ||
          inline_spec.output_dim() != num_classes) {
        throw ConfigError(
            "model.layers: network is " +
            std::to_string(inline_spec.input_dim()) + "->" +
            std::to_string(inline_spec.output_dim()) + " but the dataset is " +
            std::to_string(input_dim) + "-dimensional with " +
            std::to_string(num_classes) + " classes");
      }
      return inline_spec;
  }
  throw ConfigError("model: unknown kind");
}

std::vector<Cohort> ExperimentConfig::cohorts() const {
  std::map<int, Cohort> by_id;
  if (cohort_of.empty()) {
    Cohort all;
    all.cohort_id = 0;
    for (int k = 0; k < partition.client_count; ++k) {
      all.members.push_back(k);
    }
    return {all};
  }
  for (const auto& [client, cohort] : cohort_of) {
    by_id[cohort].cohort_id = cohort;
    by_id[cohort].members.push_back(client);
  }
  std::vector<Cohort> out;
  for (auto& [id, c] : by_id) out.push_back(std::move(c));
  return out;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) {
    throw ConfigError("config: top level must be a JSON object");
  }
  ExperimentConfig cfg;
  cfg.effective = doc;
  cfg.master_seed = get_or<std::uint64_t>(doc, "config", "seed", 0);
  cfg.out_dir = get_or<std::string>(doc, "config", "output", "out");

  if (doc.contains("dataset")) {
    cfg.dataset = parse_dataset(doc.at("dataset"));
    if (cfg.dataset->kind == DatasetSource::Kind::kSynthetic) {
      cfg.dataset->synthetic.seed = derive_seed(cfg.master_seed, "dataset/synthetic");
    }
  }
  if (doc.contains("partition")) {
    cfg.partition = parse_partition(doc.at("partition"));
    cfg.partition.seed = derive_seed(cfg.master_seed, "partition");
    if (cfg.partition.scheme == PartitionSpec::Scheme::kFeatureSkew &&
        cfg.partition.feature_skew.rotation_seed == 0) {
      cfg.partition.feature_skew.rotation_seed =
          derive_seed(cfg.master_seed, "partition/feature-skew");
    }
    try {
      validate(cfg.partition);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("partition: ") + e.what());
    }
    if (cfg.dataset && cfg.dataset->kind == DatasetSource::Kind::kSynthetic) {
      cfg.dataset->synthetic.client_count = cfg.partition.client_count;
    }
  }
  if (doc.contains("cohorts")) {
    for (auto it = doc.at("cohorts").begin(); it != doc.at("cohorts").end(); ++it) {
      int client;
      try {
        client = std::stoi(it.key());
      } catch (const std::exception&) {
        throw ConfigError("cohorts: client id `" + it.key() + "` is not an integer");
      }
      cfg.cohort_of[client] = as<int>(it.value(), "cohorts." + it.key());
    }
    for (int k = 0; k < cfg.partition.client_count; ++k) {
      if (cfg.cohort_of.count(k) == 0) {
        throw ConfigError("cohorts: client " + std::to_string(k) +
                          " has no cohort assignment");
      }
    }
  }
  if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));
  if (doc.contains("federation")) {
    cfg.federation = parse_federation(doc.at("federation"), "federation", {});
    cfg.federation.seed = derive_seed(cfg.master_seed, "federation");
  }
  cfg.hpo = parse_hpo(doc.contains("hpo") ? doc.at("hpo") : json::object(),
                      cfg.federation);
  cfg.hpo.posterior.seed = derive_seed(cfg.master_seed, "posterior");
  if (doc.contains("analysis")) cfg.analysis = parse_analysis(doc.at("analysis"));
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set: expected key.path=value, got `" + assignment + "`");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;  // bare strings are allowed
  }

  json* node = &doc;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("--set: empty key path");
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    node = &(*node)[keys[i]];
  }
  (*node)[keys.back()] = value;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();

  json doc;
  try {
    doc = json::parse(buffer.str());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(doc, o);

  ExperimentConfig cfg = parse_config(doc);
  cfg.raw_text = buffer.str();
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  return cfg.effective;
}

Dataset load_dataset(const DatasetSource& source) {
  switch (source.kind) {
    case DatasetSource::Kind::kSynthetic:
      return generate_synthetic_industrial(source.synthetic);
    case DatasetSource::Kind::kIdx:
      return load_idx(source.idx_images, source.idx_labels);
    case DatasetSource::Kind::kCsv:
      return load_csv(source.csv_path);
  }
  throw ConfigError("dataset: unknown source kind");
}

}  // namespace fedhpo
