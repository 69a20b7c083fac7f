#include "fedhpo/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fedhpo {

namespace {

constexpr const char* kGlobalShuffle = "partition/global-shuffle";
constexpr const char* kClientSplit = "partition/client-split";
constexpr const char* kClassOrder = "partition/class-order";
constexpr const char* kClassShard = "partition/class-shard";
constexpr const char* kFeatureTransform = "partition/feature-transform";
constexpr const char* kSynthMeans = "synthetic/means";
constexpr const char* kSynthNoise = "synthetic/noise";

// Largest-remainder apportionment of n into parts proportional to ratios;
// every part deviates from ratio*n by less than one sample.
std::vector<std::size_t> apportion(std::size_t n,
                                   const std::vector<double>& ratios) {
  std::vector<std::size_t> out(ratios.size());
  std::vector<std::pair<double, std::size_t>> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = {exact - static_cast<double>(out[i]), i};
    assigned += out[i];
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
    ++out[frac[i % frac.size()].second];
  }
  return out;
}

// Shuffle the client's rows and carve out train/valid/test.
ClientDataset make_client(int client_id, const Dataset& data,
                          std::vector<std::size_t> rows,
                          const PartitionSpec& spec) {
  Rng rng = make_rng(spec.seed, kClientSplit,
                     static_cast<std::uint64_t>(client_id));
  rng.shuffle(rows);
  const auto counts =
      apportion(rows.size(), {spec.split.train, spec.split.valid, spec.split.test});
  ClientDataset client;
  client.client_id = client_id;
  auto it = rows.begin();
  client.train = data.select({it, it + static_cast<std::ptrdiff_t>(counts[0])});
  it += static_cast<std::ptrdiff_t>(counts[0]);
  client.valid = data.select({it, it + static_cast<std::ptrdiff_t>(counts[1])});
  it += static_cast<std::ptrdiff_t>(counts[1]);
  client.test = data.select({it, rows.end()});
  return client;
}

std::vector<ClientDataset> slices_to_clients(
    const Dataset& data, const std::vector<std::vector<std::size_t>>& slices,
    const PartitionSpec& spec) {
  std::vector<ClientDataset> clients;
  clients.reserve(slices.size());
  for (std::size_t k = 0; k < slices.size(); ++k) {
    clients.push_back(make_client(static_cast<int>(k), data, slices[k], spec));
  }
  return clients;
}

}  // namespace

void validate(const PartitionSpec& spec) {
  if (spec.client_count < 2) {
    throw std::invalid_argument("partition: client count K must be >= 2");
  }
  const double ratio_sum = spec.split.train + spec.split.valid + spec.split.test;
  if (std::abs(ratio_sum - 1.0) > 1e-9 || spec.split.train < 0 ||
      spec.split.valid < 0 || spec.split.test < 0) {
    throw std::invalid_argument("partition: split ratios must be nonnegative and sum to 1");
  }
  switch (spec.scheme) {
    case PartitionSpec::Scheme::kQuantitySkew:
      if (spec.proportions.size() != static_cast<std::size_t>(spec.client_count)) {
        throw std::invalid_argument("partition: proportions length must equal K");
      }
      for (double p : spec.proportions) {
        if (!(p > 0.0)) {
          throw std::invalid_argument("partition: every proportion must be > 0");
        }
      }
      if (std::abs(std::accumulate(spec.proportions.begin(),
                                   spec.proportions.end(), 0.0) -
                   1.0) > 1e-9) {
        throw std::invalid_argument("partition: proportions must sum to 1");
      }
      break;
    case PartitionSpec::Scheme::kLabelSkew:
      if (spec.classes_per_client < 1) {
        throw std::invalid_argument("partition: classes per client must be >= 1");
      }
      break;
    case PartitionSpec::Scheme::kExplicit:
      if (spec.assignment_file.empty()) {
        throw std::invalid_argument("partition: explicit scheme needs an assignment file");
      }
      break;
    default:
      break;
  }
}

bool AffineTransform::is_identity() const {
  return !rotate && scale == 1.0 &&
         (offset.size() == 0 || offset.isZero(0.0));
}

void AffineTransform::apply_in_place(Eigen::MatrixXd& features) const {
  if (rotate) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Eigen::VectorXd xi = features.col(axis_i);
    Eigen::VectorXd xj = features.col(axis_j);
    features.col(axis_i) = c * xi - s * xj;
    features.col(axis_j) = s * xi + c * xj;
  }
  if (scale != 1.0) features *= scale;
  if (offset.size() > 0) {
    if (offset.size() != features.cols()) {
      throw std::invalid_argument("feature transform: offset length " +
                                  std::to_string(offset.size()) +
                                  " != feature dim " +
                                  std::to_string(features.cols()));
    }
    features.rowwise() += offset.transpose();
  }
}

std::vector<ClientDataset> partition_iid(const Dataset& data,
                                         const PartitionSpec& spec) {
  validate(spec);
  validate(data);
  const auto n = static_cast<std::size_t>(data.size());
  const auto k = static_cast<std::size_t>(spec.client_count);
  if (n < k) {
    throw std::invalid_argument("partition: " + std::to_string(n) +
                                " samples cannot cover " + std::to_string(k) +
                                " clients");
  }
  Rng rng = make_rng(spec.seed, kGlobalShuffle);
  std::vector<std::size_t> order = shuffled_indices(n, rng);
  const std::size_t per = n / k;
  std::vector<std::vector<std::size_t>> slices(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t stop = (i + 1 == k) ? n : (i + 1) * per;
    slices[i].assign(order.begin() + static_cast<std::ptrdiff_t>(i * per),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return slices_to_clients(data, slices, spec);
}

std::vector<ClientDataset> partition_label_skew(const Dataset& data,
                                                const PartitionSpec& spec) {
  validate(spec);
  validate(data);
  const int k = spec.client_count;
  const int cpc = spec.classes_per_client;
  const int classes = data.num_classes;
  if (cpc > classes) {
    throw std::invalid_argument("partition: classes per client " +
                                std::to_string(cpc) + " exceeds class count " +
                                std::to_string(classes));
  }
  if (k * cpc < classes) {
    throw std::invalid_argument(
        "partition: K*classesPerClient = " + std::to_string(k * cpc) +
        " cannot cover " + std::to_string(classes) + " classes");
  }

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  for (int c = 0; c < classes; ++c) {
    if (by_class[static_cast<std::size_t>(c)].empty()) {
      throw std::invalid_argument("partition: class " + std::to_string(c) +
                                  " has no samples");
    }
  }

  // Deal classes to clients from a seeded cyclic ordering: client k takes
  // picks k*cpc .. k*cpc+cpc-1.
  std::vector<std::size_t> class_order(static_cast<std::size_t>(classes));
  std::iota(class_order.begin(), class_order.end(), 0);
  Rng order_rng = make_rng(spec.seed, kClassOrder);
  order_rng.shuffle(class_order);

  std::vector<std::vector<int>> claimants(static_cast<std::size_t>(classes));
  for (int kk = 0; kk < k; ++kk) {
    for (int j = 0; j < cpc; ++j) {
      const std::size_t pick = static_cast<std::size_t>(kk * cpc + j) %
                               static_cast<std::size_t>(classes);
      claimants[class_order[pick]].push_back(kk);
    }
  }

  std::vector<std::vector<std::size_t>> slices(static_cast<std::size_t>(k));
  for (int c = 0; c < classes; ++c) {
    auto& rows = by_class[static_cast<std::size_t>(c)];
    Rng shard_rng = make_rng(spec.seed, kClassShard, static_cast<std::uint64_t>(c));
    shard_rng.shuffle(rows);
    const auto& owners = claimants[static_cast<std::size_t>(c)];
    const std::size_t q = owners.size();
    const std::size_t base = rows.size() / q;
    const std::size_t extra = rows.size() % q;
    std::size_t at = 0;
    for (std::size_t o = 0; o < q; ++o) {
      const std::size_t take = base + (o < extra ? 1 : 0);
      auto& dst = slices[static_cast<std::size_t>(owners[o])];
      dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(at),
                 rows.begin() + static_cast<std::ptrdiff_t>(at + take));
      at += take;
    }
  }
  return slices_to_clients(data, slices, spec);
}

std::vector<ClientDataset> partition_quantity_skew(const Dataset& data,
                                                   const PartitionSpec& spec) {
  validate(spec);
  validate(data);
  const auto n = static_cast<std::size_t>(data.size());
  const auto k = static_cast<std::size_t>(spec.client_count);
  Rng rng = make_rng(spec.seed, kGlobalShuffle);
  std::vector<std::size_t> order = shuffled_indices(n, rng);

  std::vector<std::vector<std::size_t>> slices(k);
  std::size_t at = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t take = static_cast<std::size_t>(
        std::floor(spec.proportions[i] * static_cast<double>(n) + 1e-9));
    if (i + 1 == k) take = n - at;  // remainder to the last client
    take = std::min(take, n - at);
    slices[i].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(at + take));
    at += take;
  }
  return slices_to_clients(data, slices, spec);
}

std::vector<AffineTransform> derive_feature_transforms(
    const FeatureSkewSpec& skew, int client_count, int dim) {
  if (skew.rotate && dim < 2) {
    throw std::invalid_argument(
        "feature skew: rotation requested but feature dimension < 2");
  }
  if (skew.scale < 1.0) {
    throw std::invalid_argument("feature skew: scale spread must be >= 1");
  }
  std::vector<AffineTransform> out(static_cast<std::size_t>(client_count));
  for (int k = 0; k < client_count; ++k) {
    Rng rng = make_rng(skew.rotation_seed, kFeatureTransform,
                       static_cast<std::uint64_t>(k));
    AffineTransform& t = out[static_cast<std::size_t>(k)];
    if (skew.rotate) {
      t.rotate = true;
      t.axis_i = static_cast<int>(rng.below(static_cast<std::uint64_t>(dim)));
      t.axis_j = static_cast<int>(rng.below(static_cast<std::uint64_t>(dim - 1)));
      if (t.axis_j >= t.axis_i) ++t.axis_j;
      t.angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    }
    if (skew.scale > 1.0) {
      t.scale = std::exp(rng.uniform(-1.0, 1.0) * std::log(skew.scale));
    }
    if (skew.offset > 0.0) {
      t.offset.resize(dim);
      for (int d = 0; d < dim; ++d) {
        t.offset[d] = rng.uniform(-skew.offset, skew.offset);
      }
    }
  }
  return out;
}

std::vector<ClientDataset> partition_feature_skew(
    const Dataset& data, const PartitionSpec& spec,
    const std::vector<AffineTransform>& transforms) {
  if (transforms.size() != static_cast<std::size_t>(spec.client_count)) {
    throw std::invalid_argument("feature skew: need one transform per client");
  }
  std::vector<ClientDataset> clients = partition_iid(data, spec);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const AffineTransform& t = transforms[k];
    if (t.is_identity()) continue;
    t.apply_in_place(clients[k].train.features);
    t.apply_in_place(clients[k].valid.features);
    t.apply_in_place(clients[k].test.features);
  }
  return clients;
}

std::vector<ClientDataset> partition_feature_skew(const Dataset& data,
                                                  const PartitionSpec& spec) {
  validate(spec);
  return partition_feature_skew(
      data, spec,
      derive_feature_transforms(spec.feature_skew, spec.client_count,
                                static_cast<int>(data.dim())));
}

std::vector<ClientDataset> partition_explicit(const Dataset& data,
                                              const PartitionSpec& spec) {
  validate(spec);
  validate(data);
  std::ifstream in(spec.assignment_file);
  if (!in) {
    throw ParseError(spec.assignment_file + ": cannot open file");
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("sampleIndex", 0) != 0) {
    throw ParseError(spec.assignment_file +
                     ": line 1: expected header `sampleIndex,clientId`");
  }
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<int> owner(n, -1);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw ParseError(spec.assignment_file + ": line " +
                       std::to_string(lineno) + ": expected two fields");
    }
    std::size_t idx;
    int cid;
    try {
      idx = static_cast<std::size_t>(std::stoull(a));
      cid = std::stoi(b);
    } catch (const std::exception&) {
      throw ParseError(spec.assignment_file + ": line " +
                       std::to_string(lineno) + ": cannot parse `" + line + "`");
    }
    if (idx >= n) {
      throw ParseError(spec.assignment_file + ": line " +
                       std::to_string(lineno) + ": sample index " + a +
                       " out of range (dataset has " + std::to_string(n) +
                       " samples)");
    }
    if (cid < 0 || cid >= spec.client_count) {
      throw ParseError(spec.assignment_file + ": line " +
                       std::to_string(lineno) + ": client id " + b +
                       " outside [0, " + std::to_string(spec.client_count) + ")");
    }
    if (owner[idx] != -1) {
      throw ParseError(spec.assignment_file + ": line " +
                       std::to_string(lineno) + ": sample " + a +
                       " assigned twice");
    }
    owner[idx] = cid;
  }
  std::vector<std::vector<std::size_t>> slices(
      static_cast<std::size_t>(spec.client_count));
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i] == -1) {
      throw ParseError(spec.assignment_file + ": sample " + std::to_string(i) +
                       " has no client assignment");
    }
    slices[static_cast<std::size_t>(owner[i])].push_back(i);
  }

  std::vector<ClientDataset> clients = slices_to_clients(data, slices, spec);
  // Cyclic label remap on flagged clients: same features, different labels.
  for (int cid : spec.label_flip_clients) {
    if (cid < 0 || cid >= spec.client_count) {
      throw std::invalid_argument("partition: label-flip client " +
                                  std::to_string(cid) + " outside [0, K)");
    }
    auto flip = [&](Dataset& ds) {
      for (int& y : ds.labels) y = (y + 1) % ds.num_classes;
    };
    auto& c = clients[static_cast<std::size_t>(cid)];
    flip(c.train);
    flip(c.valid);
    flip(c.test);
  }
  return clients;
}

std::vector<ClientDataset> partition(const Dataset& data,
                                     const PartitionSpec& spec) {
  switch (spec.scheme) {
    case PartitionSpec::Scheme::kIid:
      return partition_iid(data, spec);
    case PartitionSpec::Scheme::kLabelSkew:
      return partition_label_skew(data, spec);
    case PartitionSpec::Scheme::kQuantitySkew:
      return partition_quantity_skew(data, spec);
    case PartitionSpec::Scheme::kFeatureSkew:
      return partition_feature_skew(data, spec);
    case PartitionSpec::Scheme::kExplicit:
      return partition_explicit(data, spec);
  }
  throw std::invalid_argument("partition: unknown scheme");
}

Dataset generate_synthetic_industrial(const SyntheticSpec& spec,
                                      SyntheticMetadata* meta) {
  if (spec.num_classes < 2) {
    throw std::invalid_argument("synthetic: need at least 2 classes");
  }
  if (spec.feature_dim < 1 || spec.samples_per_class_per_client < 1 ||
      spec.client_count < 1) {
    throw std::invalid_argument("synthetic: dimensions and budgets must be positive");
  }

  Eigen::MatrixXd means(spec.num_classes, spec.feature_dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    Rng rng = make_rng(spec.seed, kSynthMeans, static_cast<std::uint64_t>(c));
    for (int d = 0; d < spec.feature_dim; ++d) {
      means(c, d) = rng.uniform(-spec.mean_range, spec.mean_range);
    }
  }

  const std::size_t per_class =
      static_cast<std::size_t>(spec.samples_per_class_per_client) *
      static_cast<std::size_t>(spec.client_count);
  const std::size_t total = per_class * static_cast<std::size_t>(spec.num_classes);

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.features.resize(static_cast<Eigen::Index>(total), spec.feature_dim);
  ds.labels.resize(total);
  Eigen::Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    Rng rng = make_rng(spec.seed, kSynthNoise, static_cast<std::uint64_t>(c));
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (int d = 0; d < spec.feature_dim; ++d) {
        ds.features(row, d) = means(c, d) + spec.cluster_std * rng.normal();
      }
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }

  if (meta != nullptr) {
    meta->class_means = means;
    meta->class_kind.clear();
    const int healthy = (spec.num_classes + 1) / 2;
    for (int c = 0; c < spec.num_classes; ++c) {
      meta->class_kind.push_back(c < healthy ? "healthy" : "anomalous");
    }
  }
  return ds;
}

namespace {

std::size_t bin_of(double v, double lo, double hi, int bins) {
  if (hi <= lo) return 0;
  const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
  auto b = static_cast<std::ptrdiff_t>(std::floor(t));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return static_cast<std::size_t>(b);
}

}  // namespace

EmpiricalDistributions empirical_distributions(
    const Dataset& ds, int bins,
    const std::vector<std::pair<double, double>>& bin_range) {
  if (bins < 2) {
    throw std::invalid_argument("empirical distributions: bins must be >= 2");
  }
  if (ds.empty()) {
    throw std::invalid_argument("empirical distributions: empty dataset");
  }
  validate(ds);
  const auto dim = static_cast<std::size_t>(ds.dim());
  if (bin_range.size() != dim) {
    throw std::invalid_argument("empirical distributions: need one bin range per dimension");
  }
  const auto n = static_cast<double>(ds.size());

  EmpiricalDistributions e;
  e.bins = bins;
  e.bin_range = bin_range;
  e.label_marginal = Eigen::VectorXd::Zero(ds.num_classes);
  for (int y : ds.labels) e.label_marginal[y] += 1.0;
  e.label_marginal /= n;

  e.feature_marginal.assign(dim, Eigen::VectorXd::Zero(bins));
  e.label_given_feature.assign(dim,
                               Eigen::MatrixXd::Zero(bins, ds.num_classes));
  for (std::size_t d = 0; d < dim; ++d) {
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(bins, ds.num_classes);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      const std::size_t b =
          bin_of(ds.features(i, static_cast<Eigen::Index>(d)),
                 bin_range[d].first, bin_range[d].second, bins);
      joint(static_cast<Eigen::Index>(b),
            ds.labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    Eigen::VectorXd counts = joint.rowwise().sum();
    e.feature_marginal[d] = counts / n;
    for (int b = 0; b < bins; ++b) {
      if (counts[b] > 0.0) {
        e.label_given_feature[d].row(b) = joint.row(b) / counts[b];
      }
    }
  }
  return e;
}

EmpiricalDistributions empirical_distributions(const Dataset& ds, int bins) {
  if (ds.empty()) {
    throw std::invalid_argument("empirical distributions: empty dataset");
  }
  std::vector<std::pair<double, double>> range;
  range.reserve(static_cast<std::size_t>(ds.dim()));
  for (Eigen::Index d = 0; d < ds.dim(); ++d) {
    range.emplace_back(ds.features.col(d).minCoeff(),
                       ds.features.col(d).maxCoeff());
  }
  return empirical_distributions(ds, bins, range);
}

namespace {

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

Dataset full_client_data(const ClientDataset& c) {
  return concat({&c.train, &c.valid, &c.test});
}

}  // namespace

SkewReport skew_diagnostics(const std::vector<ClientDataset>& clients,
                            int bins, const SkewThresholds& thresholds) {
  if (clients.size() < 2) {
    throw std::invalid_argument("skew diagnostics: need at least 2 clients");
  }
  std::vector<Dataset> data;
  data.reserve(clients.size());
  for (const auto& c : clients) data.push_back(full_client_data(c));

  // Shared bin edges: global min/max per dimension.
  const auto dim = static_cast<std::size_t>(data.front().dim());
  std::vector<std::pair<double, double>> range(
      dim, {std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()});
  for (const Dataset& ds : data) {
    for (std::size_t d = 0; d < dim; ++d) {
      range[d].first = std::min(
          range[d].first, ds.features.col(static_cast<Eigen::Index>(d)).minCoeff());
      range[d].second = std::max(
          range[d].second, ds.features.col(static_cast<Eigen::Index>(d)).maxCoeff());
    }
  }

  std::vector<EmpiricalDistributions> dists;
  dists.reserve(data.size());
  for (const Dataset& ds : data) {
    dists.push_back(empirical_distributions(ds, bins, range));
  }

  const auto k = static_cast<Eigen::Index>(clients.size());
  SkewReport rep;
  rep.thresholds = thresholds;
  rep.label_tv = Eigen::MatrixXd::Zero(k, k);
  rep.feature_tv = Eigen::MatrixXd::Zero(k, k);
  for (const auto& c : clients) rep.sizes.push_back(c.n_k());

  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a + 1; b < k; ++b) {
      const auto& da = dists[static_cast<std::size_t>(a)];
      const auto& db = dists[static_cast<std::size_t>(b)];
      const double ltv = total_variation(da.label_marginal, db.label_marginal);
      double ftv = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        ftv += total_variation(da.feature_marginal[d], db.feature_marginal[d]);
      }
      ftv /= static_cast<double>(dim);
      rep.label_tv(a, b) = rep.label_tv(b, a) = ltv;
      rep.feature_tv(a, b) = rep.feature_tv(b, a) = ftv;
      rep.max_label_tv = std::max(rep.max_label_tv, ltv);
      rep.max_feature_tv = std::max(rep.max_feature_tv, ftv);
    }
  }
  const auto [mn, mx] = std::minmax_element(rep.sizes.begin(), rep.sizes.end());
  rep.quantity_ratio =
      *mn > 0 ? static_cast<double>(*mx) / static_cast<double>(*mn)
              : std::numeric_limits<double>::infinity();
  rep.label_skew = rep.max_label_tv > thresholds.label_tv;
  rep.feature_skew = rep.max_feature_tv > thresholds.feature_tv;
  rep.quantity_skew = rep.quantity_ratio > thresholds.quantity_ratio;
  return rep;
}

}  // namespace fedhpo
