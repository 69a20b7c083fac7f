#include "fedhpo/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fedhpo {

void validate(const KernelParams& kernel) {
  if (!(kernel.signal_variance > 0.0) || !(kernel.lengthscale > 0.0)) {
    throw std::invalid_argument("gp: signal variance and lengthscale must be > 0");
  }
  if (kernel.noise_variance < 0.0) {
    throw std::invalid_argument("gp: noise variance must be >= 0");
  }
}

void validate(const BOConfig& cfg) {
  validate(cfg.kernel);
  if (!(cfg.eta_min > 0.0) || !(cfg.eta_min < cfg.eta_max)) {
    throw std::invalid_argument("bo: search space needs 0 < eta_min < eta_max");
  }
  if (cfg.n_init < 1 || cfg.n_iter < 0) {
    throw std::invalid_argument("bo: n_init must be >= 1 and n_iter >= 0");
  }
  if (cfg.ucb_beta < 0.0) {
    throw std::invalid_argument("bo: ucb beta must be >= 0");
  }
  if (cfg.acquisition_grid < 2) {
    throw std::invalid_argument("bo: acquisition grid needs >= 2 points");
  }
}

namespace {

double se_kernel(const KernelParams& k, double a, double b) {
  const double d = a - b;
  return k.signal_variance * std::exp(-d * d / (2.0 * k.lengthscale * k.lengthscale));
}

// One Cholesky factorization shared by all posterior queries.
class PosteriorEvaluator {
 public:
  explicit PosteriorEvaluator(const GPState& state) : state_(state) {
    validate(state.kernel);
    const auto n = static_cast<Eigen::Index>(state.inputs.size());
    if (n == 0) return;
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        cov(i, j) = se_kernel(state.kernel, state_.inputs[static_cast<std::size_t>(i)],
                              state_.inputs[static_cast<std::size_t>(j)]);
      }
      cov(i, i) += state.kernel.noise_variance;
    }
    if (!cov.allFinite()) {
      throw std::runtime_error(
          "gp: kernel matrix has non-finite entries (conditioning failure)");
    }

    // Jitter escalation: 1e-10 trace-scaled diagonal, doubled up to 6 times.
    const double base = 1e-10 * cov.trace() / static_cast<double>(n);
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 7; ++attempt) {
      llt_.compute(cov + jitter * Eigen::MatrixXd::Identity(n, n));
      if (llt_.info() == Eigen::Success) {
        ready_ = true;
        break;
      }
      if (attempt == 7) {
        throw std::runtime_error(
            "gp: kernel matrix is not positive definite after jitter "
            "escalation to " + std::to_string(jitter) + " (conditioning failure)");
      }
      jitter = (jitter == 0.0) ? base : 2.0 * jitter;
    }
    Eigen::Map<const Eigen::VectorXd> y(state_.values.data(), n);
    alpha_ = llt_.solve(y);
  }

  Posterior at(double query) const {
    const auto n = static_cast<Eigen::Index>(state_.inputs.size());
    if (n == 0) {
      return {0.0, std::sqrt(state_.kernel.signal_variance)};
    }
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      k_star[i] = se_kernel(state_.kernel, query,
                            state_.inputs[static_cast<std::size_t>(i)]);
    }
    Posterior post;
    post.mean = k_star.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(k_star);
    double var = state_.kernel.signal_variance - v.squaredNorm();
    // Cancellation floor: anything below float noise is an exact zero.
    if (var < 1e-14 * state_.kernel.signal_variance) var = 0.0;
    post.stddev = std::sqrt(var);
    return post;
  }

 private:
  const GPState& state_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  bool ready_ = false;
};

}  // namespace

Posterior gp_fit_posterior(const GPState& state, double query) {
  return PosteriorEvaluator(state).at(query);
}

double ucb(double mean, double stddev, double beta) {
  if (stddev < 0.0) {
    throw std::invalid_argument("ucb: stddev must be >= 0");
  }
  return mean + beta * stddev;
}

std::vector<double> initial_design(const BOConfig& cfg) {
  validate(cfg);
  const double lo = std::log10(cfg.eta_min);
  const double hi = std::log10(cfg.eta_max);
  const double width = (hi - lo) / static_cast<double>(cfg.n_init);
  std::vector<double> points;
  points.reserve(static_cast<std::size_t>(cfg.n_init));
  for (int i = 0; i < cfg.n_init; ++i) {
    points.push_back(lo + (static_cast<double>(i) + 0.5) * width);
  }
  return points;
}

double maximize_acquisition(const GPState& state, const BOConfig& cfg) {
  validate(cfg);
  const double lo = std::log10(cfg.eta_min);
  const double hi = std::log10(cfg.eta_max);
  const PosteriorEvaluator eval(state);

  double best_u = lo;
  double best_a = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.acquisition_grid; ++i) {
    const double u = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(cfg.acquisition_grid - 1);
    const Posterior p = eval.at(u);
    const double a = ucb(p.mean, p.stddev, cfg.ucb_beta);
    if (a > best_a) {  // strict: ties keep the smallest u
      best_a = a;
      best_u = u;
    }
  }
  return best_u;
}

}  // namespace fedhpo
