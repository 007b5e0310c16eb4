#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "convlab/rng.hpp"

namespace convlab {

/// Pointwise activation. User-supplied activations are piecewise-linear
/// tables over strictly increasing knots, extended linearly past the ends
/// with the boundary segment slopes.
struct Activation {
  enum class Kind { Identity, ReLU, Tanh, Table };
  Kind kind = Kind::Identity;
  std::vector<double> table_x;
  std::vector<double> table_y;

  double operator()(double x) const;
  std::string name() const;

  static Activation identity() { return {Kind::Identity, {}, {}}; }
  static Activation relu() { return {Kind::ReLU, {}, {}}; }
  static Activation tanh_fn() { return {Kind::Tanh, {}, {}}; }
  static Activation table(std::vector<double> x, std::vector<double> y);
};

/// Ordered receptive-field offsets. Rank-1 masks use offset[0] only; rank-2
/// masks (the zero-padded 3x3 grid) use both components. The declared size is
/// validated against the element count.
struct MaskSet {
  std::vector<std::array<int, 2>> offsets;
  int rank = 1;
  int declared_size = 0;

  int size() const { return static_cast<int>(offsets.size()); }
};

/// Patch-extractor family for one layer.
struct Extractor {
  enum class Kind { Circular1D, Circular1DPool2, ZeroPad2D3x3, FullyConnected };
  Kind kind = Kind::FullyConnected;
  int halfwidth = 0;    // Circular1D: mask {-halfwidth..halfwidth}
  int grid_extent = 0;  // ZeroPad2D3x3: sites (i1,i2) with 0 <= i1,i2 <= grid_extent

  /// Canonical mask in document order (ascending offsets for 1-D, the fixed
  /// nine-offset order for the 2-D grid).
  MaskSet mask() const;
  std::string name() const;

  static Extractor circular1d(int halfwidth) {
    return {Kind::Circular1D, halfwidth, 0};
  }
  static Extractor circular1d_pool2() { return {Kind::Circular1DPool2, 1, 0}; }
  static Extractor zeropad2d(int grid_extent) {
    return {Kind::ZeroPad2D3x3, 0, grid_extent};
  }
  static Extractor fully_connected() { return {Kind::FullyConnected, 0, 0}; }
};

/// Declarative description of a network: L hidden layers, spatial dims
/// N_0..N_{L+1}, per-layer extractor/mask/precision, channel slopes for the
/// widening layers, and the shared activation.
struct ArchSpec {
  int hidden_layers = 1;        // L
  std::vector<int> spatial;     // N_0..N_{L+1}
  int input_channels = 1;       // C_0
  int output_channels = 1;      // C_{L+1}
  int num_inputs = 1;           // P
  std::vector<Extractor> extractors;  // layers 0..L
  std::vector<MaskSet> masks;         // layers 0..L, canonical unless edited
  std::vector<double> lambdas;        // precision per layer, 0..L
  std::vector<double> alphas;         // channel slopes, layers 1..L
  Activation activation;

  /// Which mask cardinality normalizes the input kernel. The first-layer
  /// covariance of the network uses the layer-0 mask; the alternative
  /// normalizer is kept as a configuration switch.
  enum class K1Normalizer { Layer0, Layer1 };
  K1Normalizer k1_normalizer = K1Normalizer::Layer0;

  int L() const { return hidden_layers; }
  int P() const { return num_inputs; }
  int spatial_dim(int ell) const { return spatial.at(ell); }
  /// D_ell = N_ell * P for ell in [1, L+1] (also defined at ell = 0).
  int flat_dim(int ell) const { return spatial.at(ell) * num_inputs; }
  int mask_size(int layer) const { return masks.at(layer).size(); }
  /// C_ell(n) = max(1, round(alpha_ell * n)) for hidden layers 1..L.
  int channels_at(int ell, long long n) const;

  /// Fills masks with the extractors' canonical masks.
  void rebuild_masks();
};

/// Builds a spec with canonical masks from the given pieces.
ArchSpec make_arch(int hidden_layers, std::vector<int> spatial,
                   std::vector<Extractor> extractors, std::vector<double> lambdas,
                   std::vector<double> alphas, Activation activation, int input_channels,
                   int output_channels, int num_inputs);

/// Precompiled patch evaluation: patch component m of site i is
/// sum_k w_k * z[idx_k], with an empty term list encoding a zero-padded entry.
struct PatchPlan {
  struct Term {
    int index;
    double weight;
  };
  int sites = 0;
  int mask_size = 0;
  int input_len = 0;
  std::vector<std::vector<Term>> terms;  // indexed site * mask_size + m

  void apply(const double* z, int site, double* out) const;
};

PatchPlan build_patch_plan(const ArchSpec& spec, int layer);

/// R^{(site,layer)}(z): receptive-field vector of length M_layer, components
/// in mask order. Sites are 0-based (site s here is the paper's site s+1).
Eigen::VectorXd extract_patch(const ArchSpec& spec, int layer, int site,
                              const Eigen::VectorXd& z);

struct ValidationIssue {
  std::string constraint;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> violations;
  bool pass() const { return violations.empty(); }
  std::string str() const;
};

/// Structural checks: dimension positivity, vector sizes, per-extractor shape
/// rules (circular width, pooling parity, zero-pad grid, FCNN shape), mask
/// cardinality and distinctness. Violations are data, not faults.
ValidationReport validate_arch(const ArchSpec& spec);

struct GrowthProbeReport {
  double fitted_order = 0.0;
  bool flagged = false;  // apparent growth of order >= 2
  std::vector<double> radii;
  std::vector<double> max_abs;  // max |sigma(R_m(z))| observed at each radius
};

/// Spot-check of the activation growth along the layer's patch extractor:
/// samples z on spheres of increasing radius, records the largest
/// |sigma(R_m(z))|, and fits the log-log slope over the schedule.
GrowthProbeReport growth_probe(const ArchSpec& spec, int layer, int samples_per_radius,
                               const std::vector<double>& radius_schedule, RngStream stream);

}  // namespace convlab
