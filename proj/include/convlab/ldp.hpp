#pragma once

#include <Eigen/Dense>
#include <vector>

#include "convlab/arch.hpp"
#include "convlab/kernel.hpp"
#include "convlab/psd.hpp"
#include "convlab/rng.hpp"

namespace convlab {

struct MgfOptions {
  long long samples = 100000;
  /// Standard deviation multipliers of the Gaussian proposals. {1} is the
  /// plain estimator; a ladder of scales turns the estimate into a balanced
  /// multiple-importance-sampling mean, which keeps the weights integrable
  /// near the domain boundary.
  std::vector<double> proposal_scales = {1.0};
  int workers = 1;
  double tail_top_fraction = 0.001;
  double tail_mass_limit = 0.5;
};

struct MgfEstimate {
  double log_value = 0.0;
  bool infinite = false;
  double std_error = 0.0;
  long long samples = 0;
  /// Mass fraction carried by the top tail_top_fraction of the summands.
  double tail_mass = 0.0;
};

/// log M_layer(Q0|Q1): log of the Monte Carlo mean of
/// exp(tr(Q0^T G^(layer)(sqrt(Q1) z))), via log-sum-exp. Returns the infinite
/// flag when any exponent is non-finite or the tail diagnostic trips.
MgfEstimate log_mgf(const ArchSpec& spec, int layer, const Eigen::MatrixXd& tilt,
                    const PsdMatrix& q1, RngStream stream, const MgfOptions& opts = {});

/// Radius of a ball of tilts with provably finite MGF: 1/(2*A*||Q1||_2) with
/// A estimated by maximizing ||G(z)||_F / (1 + ||z||^2) over sampled z and
/// inflated by a 1.5x safety factor.
double safe_tilt_radius(const ArchSpec& spec, int layer, const PsdMatrix& q1, int probe_samples,
                        RngStream stream);

struct RateOptions {
  long long mc_samples = 100000;
  std::vector<double> proposal_scales = {1.0, 1.4142135623730951, 2.0, 2.8284271247461903};
  double grad_tol = 1e-3;  // on the gradient Frobenius norm, relative to 1+||Q2||_F
  double plateau_tol = 1e-5;  // stop once unclipped accepted steps gain less
                              // than this (relative to 1+||Q2||_F) three times
                              // in a row; gains that small sit below the
                              // estimator's own resolution
  int max_iterations = 600;
  double ess_refresh_fraction = 0.10;
  int max_refreshes = 4;
  double trust_init_fraction = 0.9;
  double trust_expand = 1.4;
  double trust_cap = 1e6;
  int probe_samples = 4096;
  int workers = 1;
};

struct RateResult {
  double value = 0.0;            // I >= 0
  Eigen::MatrixXd tilt;          // optimal Q0
  int iterations = 0;
  double grad_norm = 0.0;
  bool domain_limited = false;   // optimum sits on the trust-region boundary;
                                 // value is a lower bound for I
  double trust_radius = 0.0;
  long long mc_samples = 0;
  int refreshes = 0;
};

/// Layer rate I_layer(Q2|Q1): maximizes tr(Q0^T Q2) - log M(Q0|Q1) over
/// symmetric tilts by gradient ascent with backtracking. The gradient is the
/// self-normalized importance-weighted Monte Carlo mean of G under the tilted
/// weights; iterates stay inside an expanding trust region that never crosses
/// a +infinity MGF evaluation.
RateResult rate_layer(const ArchSpec& spec, int layer, const PsdMatrix& q2, const PsdMatrix& q1,
                      RngStream stream, const RateOptions& opts = {});

struct ChainRateResult {
  double total = 0.0;
  std::vector<RateResult> per_layer;
  bool domain_limited = false;
};

/// Chain rate alpha_1 I_1(Q_2|K^(1)) + sum_{ell>=2} alpha_ell I_ell(Q_{ell+1}|Q_ell).
/// `qs` holds Q_2..Q_{L+1} in order.
ChainRateResult rate_chain(const ArchSpec& spec, const std::vector<PsdMatrix>& qs,
                           const PsdMatrix& k1, RngStream stream, const RateOptions& opts = {});

struct MarginalOptions {
  RateOptions rate;
  int coarse_points = 13;
  double scale_lo = 0.05;
  double scale_hi = 4.0;
  int refinements = 3;
  int sweeps = 2;
};

struct MarginalResult {
  double value = 0.0;
  double bracket = 0.0;  // width of the final refinement bracket (in scale)
  std::vector<PsdMatrix> minimizers;  // intermediate kernels Q_2..Q_L
  bool converged = true;
};

/// Marginal rate I_{L+1}(Q): infimum of the chain rate over intermediate
/// kernels, by coordinate descent on scale-parameterized PSD grids around the
/// deterministic-limit intermediates. Desk scale: L <= 2.
MarginalResult rate_marginal(const ArchSpec& spec, const PsdMatrix& q, const KernelChain& limit,
                             RngStream stream, const MarginalOptions& opts = {});

/// Output rate J(Q, Z) = 0.5 * sum_c ||Z_c||_Q^2 + I_{L+1}(Q), with Z split
/// into C_{L+1} channel blocks; +infinity when a block escapes Im(Q).
double output_rate(const ArchSpec& spec, const PsdMatrix& q, const Eigen::VectorXd& z,
                   const KernelChain& limit, RngStream stream, const MarginalOptions& opts = {});

struct EventSpec {
  int kernel_index = 2;  // chain index ell of K^(ell,n), in [2, L+1]
  enum class Stat { Entry, FroNorm } stat = Stat::Entry;
  int row = 0;
  int col = 0;
  bool greater = true;  // event is {stat >= level} (else <=)
  double level = 0.0;

  bool evaluate(const PsdMatrix& k) const;
};

struct EmpiricalRateRow {
  long long n = 0;
  long long replicas = 0;
  long long hits = 0;
  double p_hat = 0.0;
  double rate_estimate = 0.0;  // -(1/n) log p_hat
  double ci_lo = 0.0;          // 99% Wilson interval mapped through -(1/n) log
  double ci_hi = 0.0;
  bool undersampled = false;   // fewer than 10 hits
};

/// Direct-simulation estimate of -(1/n) log P(K^(ell,n) in event) over a list
/// of scales n.
std::vector<EmpiricalRateRow> empirical_rate(const ArchSpec& spec, const PsdMatrix& k1,
                                             const EventSpec& event,
                                             const std::vector<long long>& n_list,
                                             long long replicas, RngStream stream,
                                             const McOptions& opts = {});

/// svec/unsvec: isometry between symmetric matrices with the Frobenius inner
/// product and R^{d(d+1)/2} (off-diagonal entries carry sqrt(2)).
Eigen::VectorXd sym_to_vec(const Eigen::MatrixXd& m);
Eigen::MatrixXd vec_to_sym(const Eigen::VectorXd& v, int dim);

}  // namespace convlab
