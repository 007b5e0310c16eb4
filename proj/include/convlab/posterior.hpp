#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "convlab/psd.hpp"

namespace convlab {

/// Flattened observations Y with the channel-major layout: block c holds the
/// N_{L+1} x P slice of channel c, flattened as k = i*P + mu.
struct Observations {
  Eigen::VectorXd y;   // dimension D_bar = channels * block dim
  int channels = 1;    // C_{L+1}
  double beta = 1.0;   // noise precision

  int block_dim() const { return static_cast<int>(y.size()) / channels; }
};

/// Gaussian log likelihood (D_bar/2) log(beta/2pi) - (beta/2) ||s - y||^2.
double log_likelihood(const Observations& obs, const Eigen::VectorXd& s);

/// Posterior potential
///   Psi(K|y) = beta y^T (I + beta I (x) K)^{-1} y + logdet(I + beta I (x) K),
/// computed through the D_{L+1}-sized factorization of (I + beta K); the
/// Kronecker block structure makes the channel blocks independent.
double psi(const PsdMatrix& k, const Observations& obs);

/// Normalized importance weights proportional to exp(-Psi(K|y)/2), via
/// log-sum-exp.
std::vector<double> posterior_weights(const std::vector<PsdMatrix>& ks, const Observations& obs);

struct WeightedEstimate {
  double value = 0.0;
  double ess = 0.0;  // effective sample size 1 / sum w^2
};

/// Importance estimate sum_k w_k stat(K_k) with its effective sample size.
WeightedEstimate posterior_expectation(const std::function<double(const PsdMatrix&)>& stat,
                                       const std::vector<PsdMatrix>& ks,
                                       const std::vector<double>& weights);

}  // namespace convlab
