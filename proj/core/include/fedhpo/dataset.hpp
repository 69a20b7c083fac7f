#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace fedhpo {

// Labeled sample set. Rows of `features` are samples, labels are class ids in
// [0, num_classes).
struct Dataset {
  Eigen::MatrixXd features;  // n x d
  std::vector<int> labels;   // n
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool empty() const { return size() == 0; }

  // Row subset in the given order.
  Dataset select(const std::vector<std::size_t>& rows) const;
};

// Throws std::invalid_argument when label/feature row counts disagree or a
// label falls outside [0, num_classes).
void validate(const Dataset& ds);

Dataset concat(const std::vector<const Dataset*>& parts);

// One client's local data with fixed splits. n_k counts train+valid+test.
struct ClientDataset {
  int client_id = 0;
  Dataset train;
  Dataset valid;
  Dataset test;

  Eigen::Index n_k() const {
    return train.size() + valid.size() + test.size();
  }
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// IDX container pair (images + labels, big-endian dims). Byte features are
// scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with header `label,f0,f1,...`.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

}  // namespace fedhpo
