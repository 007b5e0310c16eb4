#include "convlab/arch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace convlab {

double Activation::operator()(double x) const {
  switch (kind) {
    case Kind::Identity:
      return x;
    case Kind::ReLU:
      return x > 0.0 ? x : 0.0;
    case Kind::Tanh:
      return std::tanh(x);
    case Kind::Table: {
      const auto& xs = table_x;
      const auto& ys = table_y;
      size_t n = xs.size();
      if (x <= xs.front()) {
        double slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return ys[0] + slope * (x - xs[0]);
      }
      if (x >= xs.back()) {
        double slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        return ys[n - 1] + slope * (x - xs[n - 1]);
      }
      auto it = std::upper_bound(xs.begin(), xs.end(), x);
      size_t hi = static_cast<size_t>(it - xs.begin());
      size_t lo = hi - 1;
      double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
      return ys[lo] + t * (ys[hi] - ys[lo]);
    }
  }
  return x;
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::Identity:
      return "identity";
    case Kind::ReLU:
      return "relu";
    case Kind::Tanh:
      return "tanh";
    case Kind::Table:
      return "table";
  }
  return "identity";
}

Activation Activation::table(std::vector<double> x, std::vector<double> y) {
  if (x.size() < 2 || x.size() != y.size())
    throw std::invalid_argument("Activation::table: need >= 2 knots and matching sizes");
  for (size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1]))
      throw std::invalid_argument("Activation::table: knots must be strictly increasing");
  return {Kind::Table, std::move(x), std::move(y)};
}

MaskSet Extractor::mask() const {
  MaskSet m;
  switch (kind) {
    case Kind::Circular1D:
      m.rank = 1;
      for (int d = -halfwidth; d <= halfwidth; ++d) m.offsets.push_back({d, 0});
      break;
    case Kind::Circular1DPool2:
      m.rank = 1;
      for (int d = -1; d <= 1; ++d) m.offsets.push_back({d, 0});
      break;
    case Kind::ZeroPad2D3x3:
      // Fixed document order of the nine-offset grid mask.
      m.rank = 2;
      m.offsets = {{0, 0},  {+1, 0},  {-1, 0},  {0, +1}, {+1, +1},
                   {+1, -1}, {-1, +1}, {-1, -1}, {0, -1}};
      break;
    case Kind::FullyConnected:
      m.rank = 1;
      m.offsets.push_back({0, 0});
      break;
  }
  m.declared_size = m.size();
  return m;
}

std::string Extractor::name() const {
  switch (kind) {
    case Kind::Circular1D:
      return "circular1d";
    case Kind::Circular1DPool2:
      return "circular1d_pool2";
    case Kind::ZeroPad2D3x3:
      return "zeropad2d";
    case Kind::FullyConnected:
      return "fully_connected";
  }
  return "fully_connected";
}

int ArchSpec::channels_at(int ell, long long n) const {
  if (ell == 0) return input_channels;
  if (ell == hidden_layers + 1) return output_channels;
  double a = alphas.at(ell - 1);
  long long c = std::llround(a * static_cast<double>(n));
  return static_cast<int>(std::max<long long>(1, c));
}

void ArchSpec::rebuild_masks() {
  masks.clear();
  masks.reserve(extractors.size());
  for (const auto& e : extractors) masks.push_back(e.mask());
}

ArchSpec make_arch(int hidden_layers, std::vector<int> spatial,
                   std::vector<Extractor> extractors, std::vector<double> lambdas,
                   std::vector<double> alphas, Activation activation, int input_channels,
                   int output_channels, int num_inputs) {
  ArchSpec s;
  s.hidden_layers = hidden_layers;
  s.spatial = std::move(spatial);
  s.extractors = std::move(extractors);
  s.lambdas = std::move(lambdas);
  s.alphas = std::move(alphas);
  s.activation = std::move(activation);
  s.input_channels = input_channels;
  s.output_channels = output_channels;
  s.num_inputs = num_inputs;
  s.rebuild_masks();
  return s;
}

void PatchPlan::apply(const double* z, int site, double* out) const {
  const std::vector<Term>* row = terms.data() + static_cast<size_t>(site) * mask_size;
  for (int m = 0; m < mask_size; ++m) {
    double v = 0.0;
    for (const Term& t : row[m]) v += t.weight * z[t.index];
    out[m] = v;
  }
}

PatchPlan build_patch_plan(const ArchSpec& spec, int layer) {
  if (layer < 0 || layer > spec.L())
    throw std::invalid_argument("build_patch_plan: layer out of range");
  const Extractor& ex = spec.extractors.at(layer);
  const MaskSet& mask = spec.masks.at(layer);
  const int n_in = spec.spatial_dim(layer);
  const int n_out = spec.spatial_dim(layer + 1);

  PatchPlan plan;
  plan.sites = n_out;
  plan.mask_size = mask.size();
  plan.input_len = n_in;
  plan.terms.resize(static_cast<size_t>(n_out) * mask.size());

  auto wrap = [](int idx, int n) { return ((idx % n) + n) % n; };

  for (int i = 0; i < n_out; ++i) {
    for (int m = 0; m < mask.size(); ++m) {
      auto& cell = plan.terms[static_cast<size_t>(i) * mask.size() + m];
      switch (ex.kind) {
        case Extractor::Kind::Circular1D:
          cell.push_back({wrap(i + mask.offsets[m][0], n_in), 1.0});
          break;
        case Extractor::Kind::Circular1DPool2: {
          int p = wrap(i + mask.offsets[m][0], n_out);
          cell.push_back({2 * p, 0.5});
          cell.push_back({2 * p + 1, 0.5});
          break;
        }
        case Extractor::Kind::ZeroPad2D3x3: {
          int side = ex.grid_extent + 1;
          int i1 = i / side;
          int i2 = i % side;
          int a = i1 + mask.offsets[m][0];
          int b = i2 + mask.offsets[m][1];
          if (a >= 0 && a < side && b >= 0 && b < side) cell.push_back({a * side + b, 1.0});
          break;  // out-of-grid offsets stay empty: zero padding
        }
        case Extractor::Kind::FullyConnected:
          cell.push_back({0, 1.0});
          break;
      }
    }
  }
  return plan;
}

Eigen::VectorXd extract_patch(const ArchSpec& spec, int layer, int site,
                              const Eigen::VectorXd& z) {
  PatchPlan plan = build_patch_plan(spec, layer);
  if (z.size() != plan.input_len)
    throw std::invalid_argument("extract_patch: z length does not match N_layer");
  if (site < 0 || site >= plan.sites)
    throw std::invalid_argument("extract_patch: site index out of range");
  Eigen::VectorXd out(plan.mask_size);
  plan.apply(z.data(), site, out.data());
  return out;
}

std::string ValidationReport::str() const {
  if (pass()) return "pass";
  std::ostringstream os;
  for (const auto& v : violations) os << v.constraint << ": " << v.detail << "\n";
  return os.str();
}

ValidationReport validate_arch(const ArchSpec& spec) {
  ValidationReport rep;
  auto fail = [&](const std::string& c, const std::string& d) {
    rep.violations.push_back({c, d});
  };
  const int L = spec.hidden_layers;
  if (L < 0) fail("hidden layers", "L must be >= 0");
  if (spec.num_inputs < 1) fail("inputs", "P must be >= 1");
  if (spec.input_channels < 1) fail("channels", "C_0 must be >= 1");
  if (spec.output_channels < 1) fail("channels", "C_{L+1} must be >= 1");
  if (static_cast<int>(spec.spatial.size()) != L + 2)
    fail("spatial dims", "expected L+2 entries");
  for (size_t k = 0; k < spec.spatial.size(); ++k)
    if (spec.spatial[k] < 1) fail("spatial dims", "N_" + std::to_string(k) + " must be >= 1");
  if (static_cast<int>(spec.extractors.size()) != L + 1)
    fail("extractors", "expected L+1 entries");
  if (static_cast<int>(spec.masks.size()) != L + 1) fail("masks", "expected L+1 entries");
  if (static_cast<int>(spec.lambdas.size()) != L + 1)
    fail("precisions", "expected L+1 entries");
  for (double l : spec.lambdas)
    if (!(l > 0.0)) fail("precisions", "lambda must be > 0");
  if (static_cast<int>(spec.alphas.size()) != L) fail("slopes", "expected L entries");
  for (double a : spec.alphas)
    if (!(a > 0.0)) fail("slopes", "alpha must be > 0");
  if (spec.activation.kind == Activation::Kind::Table) {
    const auto& xs = spec.activation.table_x;
    if (xs.size() < 2 || xs.size() != spec.activation.table_y.size()) {
      fail("activation table", "need >= 2 knots with matching sizes");
    } else {
      for (size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) fail("activation table", "knots must be strictly increasing");
    }
  }
  if (!rep.pass()) return rep;  // shape errors make the layer checks unreliable

  for (int ell = 0; ell <= L; ++ell) {
    const Extractor& ex = spec.extractors[ell];
    const MaskSet& mask = spec.masks[ell];
    const int n_in = spec.spatial[ell];
    const int n_out = spec.spatial[ell + 1];
    std::string at = " (layer " + std::to_string(ell) + ")";

    if (mask.declared_size != mask.size())
      fail("mask cardinality", "declared M=" + std::to_string(mask.declared_size) + " but " +
                                   std::to_string(mask.size()) + " elements" + at);
    std::set<std::array<int, 2>> uniq(mask.offsets.begin(), mask.offsets.end());
    if (static_cast<int>(uniq.size()) != mask.size())
      fail("mask distinctness", "duplicate offsets" + at);
    MaskSet canonical = ex.mask();
    if (mask.offsets != canonical.offsets)
      fail("mask/extractor mismatch", "mask differs from the " + ex.name() + " mask" + at);

    switch (ex.kind) {
      case Extractor::Kind::Circular1D:
        if (ex.halfwidth < 0) fail("circular width", "halfwidth must be >= 0" + at);
        if (2 * ex.halfwidth + 1 >= n_in)
          fail("circular width", "2*halfwidth+1 < N_ell fails" + at);
        if (n_out != n_in) fail("circular shape", "N_{ell+1} = N_ell fails" + at);
        break;
      case Extractor::Kind::Circular1DPool2:
        if (n_in != 2 * n_out)
          fail("pooling parity", "N_ell = 2*N_{ell+1} fails" + at);
        break;
      case Extractor::Kind::ZeroPad2D3x3: {
        if (ex.grid_extent < 0) fail("grid extent", "grid extent must be >= 0" + at);
        int side = ex.grid_extent + 1;
        if (n_in != side * side || n_out != side * side)
          fail("grid shape", "N_ell = N_{ell+1} = (extent+1)^2 fails" + at);
        break;
      }
      case Extractor::Kind::FullyConnected:
        if (n_in != 1 || n_out != 1)
          fail("fcnn shape", "fully connected forces N_ell = N_{ell+1} = 1" + at);
        break;
    }
  }
  return rep;
}

GrowthProbeReport growth_probe(const ArchSpec& spec, int layer, int samples_per_radius,
                               const std::vector<double>& radius_schedule, RngStream stream) {
  if (radius_schedule.size() < 2)
    throw std::invalid_argument("growth_probe: need at least two radii");
  PatchPlan plan = build_patch_plan(spec, layer);
  const int n = plan.input_len;
  const Activation& sigma = spec.activation;

  GrowthProbeReport rep;
  Eigen::VectorXd z(n), patch(plan.mask_size);
  for (size_t r = 0; r < radius_schedule.size(); ++r) {
    double radius = radius_schedule[r];
    RngStream rs = stream.split(static_cast<std::uint64_t>(r));
    double best = 0.0;
    for (int s = 0; s < samples_per_radius; ++s) {
      for (int i = 0; i < n; ++i) z(i) = rs.next_normal();
      double nz = z.norm();
      if (nz == 0.0) continue;
      z *= radius / nz;
      for (int site = 0; site < plan.sites; ++site) {
        plan.apply(z.data(), site, patch.data());
        for (int m = 0; m < plan.mask_size; ++m) best = std::max(best, std::abs(sigma(patch(m))));
      }
    }
    rep.radii.push_back(radius);
    rep.max_abs.push_back(best);
  }

  // Least-squares slope of log(max) against log(radius).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (size_t k = 0; k < rep.radii.size(); ++k) {
    if (rep.max_abs[k] <= 0.0) continue;
    double lx = std::log(rep.radii[k]);
    double ly = std::log(rep.max_abs[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  if (cnt >= 2 && sxx * cnt - sx * sx > 0.0) {
    rep.fitted_order = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  } else {
    rep.fitted_order = 0.0;  // activation vanished along the schedule
  }
  rep.flagged = rep.fitted_order >= 1.95;
  return rep;
}

}  // namespace convlab
