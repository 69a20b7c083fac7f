#pragma once

#include <cstdint>
#include <vector>

namespace fedhpo {

// Squared-exponential kernel: k(u,u') = sf2 * exp(-(u-u')^2 / (2 l^2)),
// plus noise variance on the diagonal of the training covariance.
struct KernelParams {
  double signal_variance = 1.0;  // sigma_f^2
  double lengthscale = 0.5;      // in log10-eta decades
  double noise_variance = 1e-4;  // sigma_n^2
};

void validate(const KernelParams& kernel);

// Zero-mean GP over log10(eta) with observed validation accuracies.
struct GPState {
  std::vector<double> inputs;
  std::vector<double> values;
  KernelParams kernel;

  void add(double input, double value) {
    inputs.push_back(input);
    values.push_back(value);
  }
};

struct Posterior {
  double mean = 0.0;
  double stddev = 0.0;
};

// Closed-form posterior of the latent function at `query`. With no
// observations this is the prior (mean 0, stddev sigma_f). Throws when the
// kernel matrix stays non-positive-definite after jitter escalation.
Posterior gp_fit_posterior(const GPState& state, double query);

// Upper confidence bound acquisition: mean + beta * stddev.
double ucb(double mean, double stddev, double beta);

struct BOConfig {
  double eta_min = 1e-4;
  double eta_max = 1e-1;
  int n_init = 4;
  int n_iter = 8;
  double ucb_beta = 2.0;
  KernelParams kernel;
  std::uint64_t seed = 0;
  int acquisition_grid = 1000;  // dense grid over log10-eta
};

void validate(const BOConfig& cfg);

// Deterministic stratified initial design: midpoints of n_init equal strata
// of [log10(eta_min), log10(eta_max)].
std::vector<double> initial_design(const BOConfig& cfg);

// Argmax of UCB over the dense log10-eta grid; ties break toward the
// smallest point.
double maximize_acquisition(const GPState& state, const BOConfig& cfg);

}  // namespace fedhpo
