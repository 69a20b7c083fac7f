#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "fedhpo/dataset.hpp"
#include "fedhpo/rng.hpp"

namespace fedhpo {

struct SplitRatios {
  double train = 0.7;
  double valid = 0.15;
  double test = 0.15;
};

// Per-client feature transform: rotate in one feature plane, then scale and
// shift. Models per-asset sensor variation.
struct AffineTransform {
  bool rotate = false;
  int axis_i = 0;
  int axis_j = 1;
  double angle = 0.0;
  double scale = 1.0;
  Eigen::VectorXd offset;  // zero-length = none

  bool is_identity() const;
  void apply_in_place(Eigen::MatrixXd& features) const;
};

struct FeatureSkewSpec {
  std::uint64_t rotation_seed = 0;
  bool rotate = true;    // per-client random plane + angle
  double scale = 1.0;    // per-client factor drawn log-uniform in [1/scale, scale]
  double offset = 0.0;   // per-client per-dimension shift drawn in [-offset, offset]
};

struct PartitionSpec {
  enum class Scheme { kIid, kLabelSkew, kQuantitySkew, kFeatureSkew, kExplicit };

  Scheme scheme = Scheme::kIid;
  int client_count = 2;  // K
  SplitRatios split;
  std::uint64_t seed = 0;

  int classes_per_client = 2;          // label skew
  std::vector<double> proportions;     // quantity skew, length K
  FeatureSkewSpec feature_skew;        // feature skew
  std::string assignment_file;         // explicit: CSV `sampleIndex,clientId`
  std::vector<int> label_flip_clients; // explicit: cyclic label remap on these
};

void validate(const PartitionSpec& spec);

// Seeded global shuffle, contiguous equal slices; the remainder goes to the
// last client.
std::vector<ClientDataset> partition_iid(const Dataset& data,
                                         const PartitionSpec& spec);

// Each client receives exactly classes_per_client classes, dealt round-robin
// over a seeded class ordering; every class shard is split evenly among its
// claimants. Requires K*classes_per_client >= num_classes so every class is
// claimed.
std::vector<ClientDataset> partition_label_skew(const Dataset& data,
                                                const PartitionSpec& spec);

// Client k receives floor(proportion_k * N) samples of a seeded shuffle; the
// remainder goes to the last client.
std::vector<ClientDataset> partition_quantity_skew(const Dataset& data,
                                                   const PartitionSpec& spec);

// I.i.d. split first, then each client's features pass through its own
// transform. Labels untouched.
std::vector<ClientDataset> partition_feature_skew(const Dataset& data,
                                                  const PartitionSpec& spec);
std::vector<ClientDataset> partition_feature_skew(
    const Dataset& data, const PartitionSpec& spec,
    const std::vector<AffineTransform>& transforms);
std::vector<AffineTransform> derive_feature_transforms(
    const FeatureSkewSpec& skew, int client_count, int dim);

// Assignment read from spec.assignment_file; every sample must be assigned to
// exactly one client in [0, K).
std::vector<ClientDataset> partition_explicit(const Dataset& data,
                                              const PartitionSpec& spec);

// Dispatch on spec.scheme.
std::vector<ClientDataset> partition(const Dataset& data,
                                     const PartitionSpec& spec);

struct SyntheticSpec {
  int num_classes = 6;
  int feature_dim = 24;
  int samples_per_class_per_client = 512;
  int client_count = 2;  // scales the per-class budget only
  double mean_range = 2.0;
  double cluster_std = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticMetadata {
  Eigen::MatrixXd class_means;          // num_classes x feature_dim
  std::vector<std::string> class_kind;  // "healthy" / "anomalous"
};

// Gaussian class clusters with seeded means and shared isotropic covariance.
// The first half of the classes is tagged healthy, the rest anomalous.
Dataset generate_synthetic_industrial(const SyntheticSpec& spec,
                                      SyntheticMetadata* meta = nullptr);

struct EmpiricalDistributions {
  Eigen::VectorXd label_marginal;                   // num_classes
  std::vector<Eigen::VectorXd> feature_marginal;    // per dim: bins
  std::vector<Eigen::MatrixXd> label_given_feature; // per dim: bins x classes
  std::vector<std::pair<double, double>> bin_range; // per dim
  int bins = 0;
};

// Histograms over fixed per-dimension bin edges; the conditional is computed
// per occupied bin. Edges default to the dataset's own min/max.
EmpiricalDistributions empirical_distributions(const Dataset& ds, int bins);
EmpiricalDistributions empirical_distributions(
    const Dataset& ds, int bins,
    const std::vector<std::pair<double, double>>& bin_range);

struct SkewThresholds {
  double label_tv = 0.2;
  double feature_tv = 0.2;
  double quantity_ratio = 2.0;
};

struct SkewReport {
  Eigen::MatrixXd label_tv;    // pairwise total variation
  Eigen::MatrixXd feature_tv;  // pairwise, averaged over dimensions
  std::vector<Eigen::Index> sizes;
  double max_label_tv = 0.0;
  double max_feature_tv = 0.0;
  double quantity_ratio = 1.0;  // max n_k / min n_k
  bool label_skew = false;
  bool feature_skew = false;
  bool quantity_skew = false;
  SkewThresholds thresholds;
};

// Pairwise distances between client marginals with bin edges shared across
// clients (global min/max per dimension).
SkewReport skew_diagnostics(const std::vector<ClientDataset>& clients, int bins,
                            const SkewThresholds& thresholds = {});

}  // namespace fedhpo
