#include "fedhpo/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedhpo {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr const char* kShufflePurpose = "client-update/shuffle";
constexpr const char* kDropoutPurpose = "client-update/dropout";
constexpr const char* kInitPurpose = "model/init";

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

}  // namespace

int ModelSpec::input_dim() const {
  for (const Layer& l : layers) {
    if (l.kind == Layer::Kind::kDense) return l.in;
  }
  return 0;
}

int ModelSpec::output_dim() const {
  int out = 0;
  for (const Layer& l : layers) {
    if (l.kind == Layer::Kind::kDense) out = l.out;
  }
  return out;
}

Eigen::Index ModelSpec::param_count() const {
  Eigen::Index n = 0;
  for (const Layer& l : layers) {
    if (l.kind == Layer::Kind::kDense) {
      n += static_cast<Eigen::Index>(l.in) * l.out + l.out;
    }
  }
  return n;
}

ModelSpec ModelSpec::without_dropout() const {
  ModelSpec out;
  for (const Layer& l : layers) {
    if (l.kind != Layer::Kind::kDropout) out.layers.push_back(l);
  }
  return out;
}

void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) {
    throw std::invalid_argument("model spec: no layers");
  }
  if (spec.layers.front().kind != Layer::Kind::kDense) {
    throw std::invalid_argument("model spec: first layer must be dense");
  }
  int width = -1;
  std::size_t softmax_count = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Layer& l = spec.layers[i];
    switch (l.kind) {
      case Layer::Kind::kDense:
        if (l.in <= 0 || l.out <= 0) {
          throw std::invalid_argument("model spec: layer " +
                                      std::to_string(i) +
                                      ": dense dimensions must be positive");
        }
        if (width >= 0 && l.in != width) {
          throw std::invalid_argument(
              "model spec: layer " + std::to_string(i) + ": dense expects in=" +
              std::to_string(width) + ", got " + std::to_string(l.in));
        }
        width = l.out;
        break;
      case Layer::Kind::kDropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) {
          throw std::invalid_argument("model spec: layer " +
                                      std::to_string(i) +
                                      ": dropout rate must be in [0,1)");
        }
        break;
      case Layer::Kind::kSoftmax:
        ++softmax_count;
        break;
      case Layer::Kind::kRelu:
        break;
    }
  }
  if (softmax_count != 1 ||
      spec.layers.back().kind != Layer::Kind::kSoftmax) {
    throw std::invalid_argument(
        "model spec: exactly one softmax required, as the final layer");
  }
}

ModelSpec industrial_spec(int input_dim, int num_classes) {
  ModelSpec spec;
  spec.layers = {Layer::dense(input_dim, 64),
                 Layer::relu(),
                 Layer::dropout(0.4),
                 Layer::dense(64, num_classes),
                 Layer::relu(),
                 Layer::dropout(0.4),
                 Layer::softmax()};
  return spec;
}

ModelSpec mlp_spec(int input_dim, int hidden, int num_classes) {
  ModelSpec spec;
  spec.layers = {Layer::dense(input_dim, hidden), Layer::relu(),
                 Layer::dense(hidden, num_classes), Layer::softmax()};
  return spec;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) {
    throw std::invalid_argument("train config: learning rate must be >= 0");
  }
  if (cfg.epochs < 1) {
    throw std::invalid_argument("train config: epochs must be >= 1");
  }
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train config: batch size must be >= 1");
  }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  ParamVector w(spec.param_count());
  Eigen::Index pos = 0;
  std::uint64_t dense_index = 0;
  for (const Layer& l : spec.layers) {
    if (l.kind != Layer::Kind::kDense) continue;
    Rng rng = make_rng(seed, kInitPurpose, dense_index++);
    const double limit = std::sqrt(6.0 / (l.in + l.out));
    const Eigen::Index wn = static_cast<Eigen::Index>(l.in) * l.out;
    for (Eigen::Index i = 0; i < wn; ++i) {
      w[pos + i] = rng.uniform(-limit, limit);
    }
    pos += wn;
    w.segment(pos, l.out).setZero();
    pos += l.out;
  }
  return w;
}

namespace {

// Per-layer forward cache for backpropagation.
struct Forward {
  Eigen::MatrixXd probs;                 // final softmax output
  std::vector<Eigen::MatrixXd> inputs;   // input to every layer
  std::vector<Eigen::MatrixXd> masks;    // scaled dropout masks (kDropout only)
};

Forward forward_pass(const ModelSpec& spec, const ParamVector& w,
                     const Eigen::MatrixXd& x, Rng* dropout_rng) {
  Forward f;
  f.inputs.reserve(spec.layers.size());
  f.masks.resize(spec.layers.size());
  Eigen::MatrixXd h = x;
  Eigen::Index pos = 0;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const Layer& l = spec.layers[li];
    f.inputs.push_back(h);
    switch (l.kind) {
      case Layer::Kind::kDense: {
        ConstRowMajorMap wm(w.data() + pos, l.out, l.in);
        pos += static_cast<Eigen::Index>(l.in) * l.out;
        auto b = w.segment(pos, l.out);
        pos += l.out;
        h = (h * wm.transpose()).rowwise() + b.transpose();
        break;
      }
      case Layer::Kind::kRelu:
        h = h.cwiseMax(0.0);
        break;
      case Layer::Kind::kDropout: {
        if (dropout_rng != nullptr && l.rate > 0.0) {
          Eigen::MatrixXd mask(h.rows(), h.cols());
          const double inv_keep = 1.0 / (1.0 - l.rate);
          for (Eigen::Index r = 0; r < h.rows(); ++r) {
            for (Eigen::Index c = 0; c < h.cols(); ++c) {
              mask(r, c) = dropout_rng->uniform() < l.rate ? 0.0 : inv_keep;
            }
          }
          h = h.cwiseProduct(mask);
          f.masks[li] = std::move(mask);
        }
        break;
      }
      case Layer::Kind::kSoftmax: {
        Eigen::VectorXd row_max = h.rowwise().maxCoeff();
        h = (h.colwise() - row_max).array().exp().matrix();
        Eigen::VectorXd row_sum = h.rowwise().sum();
        h = h.array().colwise() / row_sum.array();
        break;
      }
    }
  }
  f.probs = std::move(h);
  return f;
}

double batch_loss(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double p = probs(i, labels[static_cast<std::size_t>(i)]);
    p = std::min(1.0, std::max(kProbClamp, p));
    total -= std::log(p);
  }
  return total / static_cast<double>(probs.rows());
}

void check_batch(const ModelSpec& spec, const ParamVector& w,
                 const Dataset& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("nn: empty batch");
  }
  if (batch.dim() != spec.input_dim()) {
    throw std::invalid_argument("nn: batch feature dim " +
                                std::to_string(batch.dim()) +
                                " does not match model input dim " +
                                std::to_string(spec.input_dim()));
  }
  if (w.size() != spec.param_count()) {
    throw std::invalid_argument("nn: parameter vector length " +
                                std::to_string(w.size()) + " != expected " +
                                std::to_string(spec.param_count()));
  }
}

ParamVector backward_pass(const ModelSpec& spec, const ParamVector& w,
                          const Forward& f, const std::vector<int>& labels) {
  const Eigen::Index batch = f.probs.rows();
  ParamVector grad = ParamVector::Zero(w.size());

  // Cross-entropy + softmax: gradient wrt softmax input.
  Eigen::MatrixXd g = f.probs;
  for (Eigen::Index i = 0; i < batch; ++i) {
    g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  g /= static_cast<double>(batch);

  // Parameter offsets of each dense layer.
  std::vector<Eigen::Index> offsets(spec.layers.size(), -1);
  Eigen::Index pos = 0;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const Layer& l = spec.layers[li];
    if (l.kind == Layer::Kind::kDense) {
      offsets[li] = pos;
      pos += static_cast<Eigen::Index>(l.in) * l.out + l.out;
    }
  }

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const Layer& l = spec.layers[li];
    switch (l.kind) {
      case Layer::Kind::kSoftmax:
        // handled jointly with the loss above
        break;
      case Layer::Kind::kDropout:
        if (f.masks[li].size() > 0) g = g.cwiseProduct(f.masks[li]);
        break;
      case Layer::Kind::kRelu:
        g = (f.inputs[li].array() > 0.0).cast<double>().matrix().cwiseProduct(g);
        break;
      case Layer::Kind::kDense: {
        const Eigen::MatrixXd& h = f.inputs[li];
        RowMajorMap dw(grad.data() + offsets[li], l.out, l.in);
        dw = g.transpose() * h;
        grad.segment(offsets[li] + static_cast<Eigen::Index>(l.in) * l.out,
                     l.out) = g.colwise().sum();
        ConstRowMajorMap wm(w.data() + offsets[li], l.out, l.in);
        g = g * wm;
        break;
      }
    }
  }
  return grad;
}

}  // namespace

double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& batch) {
  check_batch(spec, w, batch);
  Forward f = forward_pass(spec, w, batch.features, nullptr);
  return batch_loss(f.probs, batch.labels);
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& batch) {
  check_batch(spec, w, batch);
  Forward f = forward_pass(spec, w, batch.features, nullptr);
  return backward_pass(spec, w, f, batch.labels);
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& batch, Rng& dropout_rng) {
  check_batch(spec, w, batch);
  Forward f = forward_pass(spec, w, batch.features, &dropout_rng);
  return backward_pass(spec, w, f, batch.labels);
}

Eigen::MatrixXd predict_proba(const ModelSpec& spec, const ParamVector& w,
                              const Dataset& data) {
  check_batch(spec, w, data);
  return forward_pass(spec, w, data.features, nullptr).probs;
}

double accuracy(const ModelSpec& spec, const ParamVector& w,
                const Dataset& data) {
  Eigen::MatrixXd probs = predict_proba(spec, w, data);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
    }
    if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

ClientUpdateResult client_update(int client_id, const ParamVector& w0,
                                 const TrainConfig& cfg, const ModelSpec& spec,
                                 const Dataset& data) {
  validate(cfg);
  if (data.empty()) {
    throw std::invalid_argument("client_update: empty dataset");
  }
  check_batch(spec, w0, data);

  const auto n = static_cast<std::size_t>(data.size());
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  bool wants_dropout = false;
  if (cfg.dropout) {
    for (const Layer& l : spec.layers) {
      wants_dropout |= (l.kind == Layer::Kind::kDropout && l.rate > 0.0);
    }
  }

  ClientUpdateResult res;
  res.params = w0;
  const auto cid = static_cast<std::uint64_t>(client_id);
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto epoch = static_cast<std::uint64_t>(cfg.epoch_offset + e);
    Rng shuffle_rng = make_rng(cfg.seed, kShufflePurpose, cid, epoch);
    Rng dropout_rng = make_rng(cfg.seed, kDropoutPurpose, cid, epoch);
    std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      Dataset batch = data.select(
          {order.begin() + static_cast<std::ptrdiff_t>(start),
           order.begin() + static_cast<std::ptrdiff_t>(stop)});
      ParamVector g = wants_dropout
                          ? gradient(spec, res.params, batch, dropout_rng)
                          : gradient(spec, res.params, batch);
      res.params -= cfg.learning_rate * g;
      if (!res.params.allFinite()) {
        res.diverged = true;
        res.diverged_step = res.steps;
        ++res.steps;
        return res;
      }
      ++res.steps;
    }
  }
  return res;
}

}  // namespace fedhpo
