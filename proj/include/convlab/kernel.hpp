#pragma once

#include <Eigen/Dense>
#include <vector>

#include "convlab/arch.hpp"
#include "convlab/psd.hpp"
#include "convlab/rng.hpp"

namespace convlab {

/// Stacked inputs: channels[c] is an N_0 x P matrix whose column mu is the
/// spatial vector of input mu in channel c.
struct InputBatch {
  std::vector<Eigen::MatrixXd> channels;

  int channel_count() const { return static_cast<int>(channels.size()); }
  int spatial() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int count() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }

  static InputBatch zeros(int c0, int n0, int p);
};

/// Sequence K^(1) .. K^(L+1), either one realization of the empirical chain at
/// scale n or the Monte Carlo deterministic-limit recursion.
struct KernelChain {
  enum class Provenance { Empirical, Limit };
  std::vector<PsdMatrix> kernels;
  Provenance provenance = Provenance::Empirical;
  long long scale = 0;  // n for empirical chains, MC samples for limit chains
  std::vector<Eigen::MatrixXd> std_errors;  // per layer, limit chains only

  int layers() const { return static_cast<int>(kernels.size()); }
  /// Kernel by its 1-based chain index (K(1) = input kernel).
  const PsdMatrix& K(int ell) const { return kernels.at(ell - 1); }
};

/// Deterministic input kernel K^(1): the Gram matrix of the layer-0 receptive
/// fields over channels and mask positions, scaled by 1/(lambda_0 C_0 M).
/// The normalizing mask cardinality follows spec.k1_normalizer.
PsdMatrix input_kernel(const ArchSpec& spec, const InputBatch& batch);

/// Per-channel Gram map G^(layer): flattens z to an N_layer x P tableau and
/// returns the D_{layer+1} x D_{layer+1} matrix
///   [G(z)]_{(i,mu),(j,nu)} = sum_m sigma(R_m^i(z_mu)) sigma(R_m^j(z_nu)) / (lambda M).
/// PSD by construction. Valid for layers 1..L.
PsdMatrix g_map(const ArchSpec& spec, int layer, const Eigen::VectorXd& z);

/// Caches the patch plan of one layer so Monte Carlo loops avoid rebuilding it.
class GramEvaluator {
 public:
  GramEvaluator(const ArchSpec& spec, int layer);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }

  /// Fills features(k(i,mu), m) = sigma(R_m^i(z_{:,mu})).
  void features(const Eigen::VectorXd& z, Eigen::MatrixXd& f) const;
  /// G(z) = features * features^T / (lambda * M), written into g.
  void gram(const Eigen::VectorXd& z, Eigen::MatrixXd& g) const;

  double gram_scale() const { return scale_; }

 private:
  PatchPlan plan_;
  Activation sigma_;
  int inputs_ = 1;
  int input_dim_ = 0;
  int output_dim_ = 0;
  double scale_ = 1.0;
  mutable Eigen::VectorXd column_;
  mutable Eigen::VectorXd patch_;
  mutable Eigen::MatrixXd features_;
};

struct McOptions {
  int workers = 1;
  int block = 2048;  // samples per reduction block; fixed so results do not
                     // depend on the worker count
};

/// One transition of the conditional-covariance chain:
/// (1/C) sum_c G^(layer)(sqrt(Q) z_c) with iid standard normal z_c.
/// Deterministic given the stream.
PsdMatrix transition_sample(const ArchSpec& spec, int layer, const PsdMatrix& q, long long channels,
                            RngStream stream, const McOptions& opts = {});

/// Iterates transition_sample from k1 through layer L with C_ell(n) channels,
/// recording every kernel.
KernelChain simulate_chain(const ArchSpec& spec, const PsdMatrix& k1, long long n,
                           RngStream stream, const McOptions& opts = {});

struct LimitKernel {
  PsdMatrix mean;
  Eigen::MatrixXd std_error;
  long long samples = 0;
};

/// Monte Carlo estimate of E[G^(layer)(sqrt(K) Z)] with entrywise standard
/// errors. Antithetic pairing averages G at (z, -z).
LimitKernel limit_kernel_mc(const ArchSpec& spec, int layer, const PsdMatrix& k,
                            long long samples, RngStream stream, const McOptions& opts = {},
                            bool antithetic = false);

/// The deterministic-limit recursion applied layer by layer from k1.
KernelChain limit_chain(const ArchSpec& spec, const PsdMatrix& k1, long long samples,
                        RngStream stream, const McOptions& opts = {}, bool antithetic = false);

/// Literal weight-space evaluation of the network at width scale n: samples
/// all weights W ~ N(0, 1/lambda) and propagates the batch through the layers.
/// Returns out_channels x D_{L+1} (row c = flattened output of channel c).
/// Serves as the independent oracle against the chain representation.
Eigen::MatrixXd forward_network_sample(const ArchSpec& spec, const InputBatch& batch, long long n,
                                       int out_channels, RngStream stream);

/// Output sampler through the chain representation: simulate the covariance
/// chain at scale n, then draw the conditionally Gaussian output channels.
Eigen::MatrixXd chain_output_sample(const ArchSpec& spec, const PsdMatrix& k1, long long n,
                                    int out_channels, RngStream stream,
                                    const McOptions& opts = {});

}  // namespace convlab
