#include "convlab/kernel.hpp"

#include <cmath>
#include <stdexcept>

#include "convlab/parallel.hpp"

namespace convlab {

InputBatch InputBatch::zeros(int c0, int n0, int p) {
  InputBatch b;
  b.channels.assign(c0, Eigen::MatrixXd::Zero(n0, p));
  return b;
}

PsdMatrix input_kernel(const ArchSpec& spec, const InputBatch& batch) {
  if (batch.channel_count() != spec.input_channels)
    throw std::invalid_argument("input_kernel: channel count mismatch");
  if (batch.spatial() != spec.spatial_dim(0))
    throw std::invalid_argument("input_kernel: spatial dim mismatch");
  if (batch.count() != spec.P())
    throw std::invalid_argument("input_kernel: input count mismatch");

  PatchPlan plan = build_patch_plan(spec, 0);
  const int p = spec.P();
  const int d1 = spec.flat_dim(1);
  const int m0 = plan.mask_size;
  const int c0 = spec.input_channels;

  // Receptive-field features of the raw inputs (no activation at layer 0).
  Eigen::MatrixXd feat(d1, c0 * m0);
  Eigen::VectorXd patch(m0);
  for (int c = 0; c < c0; ++c) {
    const Eigen::MatrixXd& x = batch.channels[c];
    for (int mu = 0; mu < p; ++mu) {
      Eigen::VectorXd col = x.col(mu);
      for (int i = 0; i < plan.sites; ++i) {
        plan.apply(col.data(), i, patch.data());
        feat.row(i * p + mu).segment(c * m0, m0) = patch.transpose();
      }
    }
  }

  int norm_mask = m0;
  if (spec.k1_normalizer == ArchSpec::K1Normalizer::Layer1 && spec.L() >= 1)
    norm_mask = spec.mask_size(1);
  double scale = 1.0 / (spec.lambdas.at(0) * c0 * norm_mask);
  return PsdMatrix(scale * (feat * feat.transpose()));
}

GramEvaluator::GramEvaluator(const ArchSpec& spec, int layer)
    : plan_(build_patch_plan(spec, layer)), sigma_(spec.activation), inputs_(spec.P()) {
  if (layer < 1 || layer > spec.L())
    throw std::invalid_argument("GramEvaluator: layer must be in [1, L]");
  input_dim_ = spec.flat_dim(layer);
  output_dim_ = spec.flat_dim(layer + 1);
  scale_ = 1.0 / (spec.lambdas.at(layer) * plan_.mask_size);
  column_.resize(plan_.input_len);
  patch_.resize(plan_.mask_size);
  features_.resize(output_dim_, plan_.mask_size);
}

void GramEvaluator::features(const Eigen::VectorXd& z, Eigen::MatrixXd& f) const {
  if (z.size() != input_dim_) throw std::invalid_argument("GramEvaluator: z dimension mismatch");
  f.resize(output_dim_, plan_.mask_size);
  for (int mu = 0; mu < inputs_; ++mu) {
    for (int i = 0; i < plan_.input_len; ++i) column_(i) = z(i * inputs_ + mu);
    for (int site = 0; site < plan_.sites; ++site) {
      plan_.apply(column_.data(), site, patch_.data());
      for (int m = 0; m < plan_.mask_size; ++m)
        f(site * inputs_ + mu, m) = sigma_(patch_(m));
    }
  }
}

void GramEvaluator::gram(const Eigen::VectorXd& z, Eigen::MatrixXd& g) const {
  features(z, features_);
  g.noalias() = scale_ * (features_ * features_.transpose());
}

PsdMatrix g_map(const ArchSpec& spec, int layer, const Eigen::VectorXd& z) {
  GramEvaluator eval(spec, layer);
  Eigen::MatrixXd g;
  eval.gram(z, g);
  return PsdMatrix(g);
}

namespace {

// Shared Monte Carlo mean of G over draws sqrt(Q) z, reduced block by block in
// index order. Optionally accumulates entrywise second moments for SEs.
struct GramMcResult {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd second_moment;  // filled only when want_se
  long long samples = 0;
};

GramMcResult gram_mc_mean(const ArchSpec& spec, int layer, const PsdMatrix& q,
                          long long samples, RngStream stream, const McOptions& opts,
                          bool antithetic, bool want_se) {
  if (samples < 1) throw std::invalid_argument("gram mc: samples must be >= 1");
  GramEvaluator eval(spec, layer);
  PsdMatrix root = psd_sqrt(q);
  const Eigen::MatrixXd& s = root.mat();
  const int din = eval.input_dim();
  const int dout = eval.output_dim();

  const long long block = std::max(1, opts.block);
  const int nblocks = static_cast<int>((samples + block - 1) / block);
  std::vector<Eigen::MatrixXd> sums(nblocks);
  std::vector<Eigen::MatrixXd> sqsums(want_se ? nblocks : 0);

  parallel_blocks(nblocks, opts.workers, [&](int b) {
    GramEvaluator local(eval);
    RngStream rs = stream.split(static_cast<std::uint64_t>(b));
    long long lo = b * block;
    long long hi = std::min(samples, lo + block);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dout, dout);
    Eigen::MatrixXd acc2;
    if (want_se) acc2 = Eigen::MatrixXd::Zero(dout, dout);
    Eigen::VectorXd z(din), x(din);
    Eigen::MatrixXd g(dout, dout), g2(dout, dout);
    for (long long k = lo; k < hi; ++k) {
      for (int i = 0; i < din; ++i) z(i) = rs.next_normal();
      x.noalias() = s * z;
      local.gram(x, g);
      if (antithetic) {
        local.gram(-x, g2);
        g = 0.5 * (g + g2);
      }
      acc += g;
      if (want_se) acc2 += g.cwiseProduct(g);
    }
    sums[b] = std::move(acc);
    if (want_se) sqsums[b] = std::move(acc2);
  });

  GramMcResult out;
  out.mean = Eigen::MatrixXd::Zero(dout, dout);
  for (int b = 0; b < nblocks; ++b) out.mean += sums[b];
  out.mean /= static_cast<double>(samples);
  if (want_se) {
    out.second_moment = Eigen::MatrixXd::Zero(dout, dout);
    for (int b = 0; b < nblocks; ++b) out.second_moment += sqsums[b];
    out.second_moment /= static_cast<double>(samples);
  }
  out.samples = samples;
  return out;
}

}  // namespace

PsdMatrix transition_sample(const ArchSpec& spec, int layer, const PsdMatrix& q,
                            long long channels, RngStream stream, const McOptions& opts) {
  if (channels < 1) throw std::invalid_argument("transition_sample: channels must be >= 1");
  GramMcResult r = gram_mc_mean(spec, layer, q, channels, stream, opts, false, false);
  return PsdMatrix(r.mean);
}

KernelChain simulate_chain(const ArchSpec& spec, const PsdMatrix& k1, long long n,
                           RngStream stream, const McOptions& opts) {
  if (n < 1) throw std::invalid_argument("simulate_chain: n must be >= 1");
  KernelChain chain;
  chain.provenance = KernelChain::Provenance::Empirical;
  chain.scale = n;
  chain.kernels.push_back(k1.validated());
  for (int ell = 1; ell <= spec.L(); ++ell) {
    long long c = spec.channels_at(ell, n);
    PsdMatrix next = transition_sample(spec, ell, chain.kernels.back(), c,
                                       stream.split("layer-" + std::to_string(ell)), opts);
    chain.kernels.push_back(next.validated());
  }
  return chain;
}

LimitKernel limit_kernel_mc(const ArchSpec& spec, int layer, const PsdMatrix& k,
                            long long samples, RngStream stream, const McOptions& opts,
                            bool antithetic) {
  GramMcResult r = gram_mc_mean(spec, layer, k, samples, stream, opts, antithetic, true);
  LimitKernel out;
  out.mean = PsdMatrix(r.mean);
  Eigen::MatrixXd var = (r.second_moment - r.mean.cwiseProduct(r.mean))
                            .cwiseMax(0.0) /
                        std::max<double>(1.0, static_cast<double>(samples - 1));
  out.std_error = var.cwiseSqrt();
  out.samples = samples;
  return out;
}

KernelChain limit_chain(const ArchSpec& spec, const PsdMatrix& k1, long long samples,
                        RngStream stream, const McOptions& opts, bool antithetic) {
  KernelChain chain;
  chain.provenance = KernelChain::Provenance::Limit;
  chain.scale = samples;
  chain.kernels.push_back(k1.validated());
  chain.std_errors.push_back(Eigen::MatrixXd::Zero(k1.dim(), k1.dim()));
  for (int ell = 1; ell <= spec.L(); ++ell) {
    LimitKernel lk = limit_kernel_mc(spec, ell, chain.kernels.back(), samples,
                                     stream.split("layer-" + std::to_string(ell)), opts,
                                     antithetic);
    chain.kernels.push_back(lk.mean.validated());
    chain.std_errors.push_back(lk.std_error);
  }
  return chain;
}

Eigen::MatrixXd forward_network_sample(const ArchSpec& spec, const InputBatch& batch,
                                       long long n, int out_channels, RngStream stream) {
  if (out_channels < 1 || out_channels > spec.output_channels)
    throw std::invalid_argument("forward_network_sample: need 1 <= C <= C_{L+1}");
  if (batch.channel_count() != spec.input_channels || batch.spatial() != spec.spatial_dim(0) ||
      batch.count() != spec.P())
    throw std::invalid_argument("forward_network_sample: batch shape mismatch");
  const int p = spec.P();
  const int L = spec.L();

  // Layer-0 receptive-field features of the inputs, one block per channel.
  PatchPlan plan0 = build_patch_plan(spec, 0);
  const int m0 = plan0.mask_size;
  const int d1 = spec.flat_dim(1);
  std::vector<Eigen::MatrixXd> feat0(spec.input_channels);
  {
    Eigen::VectorXd patch(m0);
    for (int c = 0; c < spec.input_channels; ++c) {
      feat0[c].resize(d1, m0);
      for (int mu = 0; mu < p; ++mu) {
        Eigen::VectorXd col = batch.channels[c].col(mu);
        for (int i = 0; i < plan0.sites; ++i) {
          plan0.apply(col.data(), i, patch.data());
          feat0[c].row(i * p + mu) = patch.transpose();
        }
      }
    }
  }

  RngStream wstream = stream.split("weights");
  int c1 = spec.channels_at(1, n);
  double sd0 = 1.0 / std::sqrt(spec.lambdas.at(0));
  double norm0 = 1.0 / std::sqrt(static_cast<double>(m0) * spec.input_channels);
  int width1 = (L == 0) ? out_channels : c1;
  Eigen::MatrixXd h(width1, d1);  // row c = flattened preactivations of channel c
  {
    RngStream ls = wstream.split("layer-0");
    Eigen::VectorXd w(m0);
    for (int c = 0; c < width1; ++c) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(d1);
      for (int cp = 0; cp < spec.input_channels; ++cp) {
        for (int m = 0; m < m0; ++m) w(m) = sd0 * ls.next_normal();
        acc.noalias() += feat0[cp] * w;
      }
      h.row(c) = (norm0 * acc).transpose();
    }
  }

  for (int ell = 1; ell <= L; ++ell) {
    GramEvaluator eval(spec, ell);
    const int m = spec.mask_size(ell);
    const int dnext = spec.flat_dim(ell + 1);
    const int cin = static_cast<int>(h.rows());
    const int cout = (ell == L) ? out_channels : spec.channels_at(ell + 1, n);

    std::vector<Eigen::MatrixXd> feats(cin);
    Eigen::VectorXd row;
    for (int c = 0; c < cin; ++c) {
      row = h.row(c).transpose();
      eval.features(row, feats[c]);
    }

    RngStream ls = wstream.split("layer-" + std::to_string(ell));
    double sd = 1.0 / std::sqrt(spec.lambdas.at(ell));
    double norm = 1.0 / std::sqrt(static_cast<double>(m) * cin);
    Eigen::MatrixXd next(cout, dnext);
    Eigen::VectorXd w(m);
    for (int c = 0; c < cout; ++c) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(dnext);
      for (int cp = 0; cp < cin; ++cp) {
        for (int k = 0; k < m; ++k) w(k) = sd * ls.next_normal();
        acc.noalias() += feats[cp] * w;
      }
      next.row(c) = (norm * acc).transpose();
    }
    h = std::move(next);
  }
  return h;
}

Eigen::MatrixXd chain_output_sample(const ArchSpec& spec, const PsdMatrix& k1, long long n,
                                    int out_channels, RngStream stream, const McOptions& opts) {
  KernelChain chain = simulate_chain(spec, k1, n, stream.split("chain"), opts);
  return sample_conditional_layer(chain.kernels.back(), out_channels, stream.split("output"));
}

}  // namespace convlab
