#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "fedhpo/dataset.hpp"
#include "fedhpo/rng.hpp"

namespace fedhpo {

// Flattened model parameters; the unit of federation exchange. Layout: for
// each dense layer in spec order, the weight matrix (out x in, row-major)
// followed by the bias vector.
using ParamVector = Eigen::VectorXd;

struct Layer {
  enum class Kind { kDense, kRelu, kSoftmax, kDropout };
  Kind kind = Kind::kDense;
  int in = 0;
  int out = 0;
  double rate = 0.0;  // dropout only

  static Layer dense(int in, int out) {
    Layer l;
    l.kind = Kind::kDense;
    l.in = in;
    l.out = out;
    return l;
  }
  static Layer relu() { return Layer{Kind::kRelu}; }
  static Layer softmax() { return Layer{Kind::kSoftmax}; }
  static Layer dropout(double rate) {
    Layer l;
    l.kind = Kind::kDropout;
    l.rate = rate;
    return l;
  }
};

struct ModelSpec {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;  // width of the last dense layer = label count
  Eigen::Index param_count() const;
  // Same spec with dropout layers removed.
  ModelSpec without_dropout() const;
};

// Structural checks: starts with a dense layer, dense widths chain, exactly
// one softmax and it is the final layer, dropout rates in [0, 1).
void validate(const ModelSpec& spec);

// Reference architectures.
ModelSpec industrial_spec(int input_dim = 24, int num_classes = 6);
ModelSpec mlp_spec(int input_dim, int hidden, int num_classes);

struct TrainConfig {
  double learning_rate = 0.01;  // eta
  int epochs = 1;               // E
  int batch_size = 32;          // B
  std::uint64_t seed = 0;
  bool dropout = true;
  // First epoch's index in the global epoch numbering. The federation loop
  // passes round*E so that R rounds of E epochs consume the same shuffle
  // streams as one sequential run of R*E epochs.
  int epoch_offset = 0;
};

void validate(const TrainConfig& cfg);

// Zero-centered fan-in/fan-out scaled uniform weights, zero biases.
// Deterministic for a fixed (spec, seed).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean cross-entropy of the softmax outputs over the batch, probabilities
// clamped to [1e-12, 1]. Dropout layers act as identity.
double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& batch);

// Gradient of `loss` wrt w, dropout off.
ParamVector gradient(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& batch);
// Gradient with inverted-dropout masks drawn from `dropout_rng`.
ParamVector gradient(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& batch, Rng& dropout_rng);

// Fraction of argmax predictions matching labels; ties break toward the
// lowest class id. Dropout is always off at evaluation.
double accuracy(const ModelSpec& spec, const ParamVector& w,
                const Dataset& data);

// Class probabilities (n x num_classes), dropout off.
Eigen::MatrixXd predict_proba(const ModelSpec& spec, const ParamVector& w,
                              const Dataset& data);

struct ClientUpdateResult {
  ParamVector params;
  long steps = 0;       // SGD steps performed
  bool diverged = false;
  long diverged_step = -1;  // 0-based step that produced non-finite params
};

// E epochs of mini-batch SGD from w0 on `data`. Each epoch re-shuffles with a
// sub-seed derived from (cfg.seed, client_id, global epoch index); the final
// partial batch is kept. Divergence (non-finite parameters) stops the run and
// is reported in the result rather than thrown.
ClientUpdateResult client_update(int client_id, const ParamVector& w0,
                                 const TrainConfig& cfg, const ModelSpec& spec,
                                 const Dataset& data);

}  // namespace fedhpo
