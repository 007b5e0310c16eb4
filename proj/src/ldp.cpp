#include "convlab/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "convlab/parallel.hpp"
#include "convlab/stats.hpp"

namespace convlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWilson99 = 2.5758293035489004;

double spectral_norm(const PsdMatrix& q) {
  if (q.dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.mat(), Eigen::EigenvaluesOnly);
  return std::max(std::abs(es.eigenvalues().maxCoeff()), std::abs(es.eigenvalues().minCoeff()));
}

// Base sample for MGF / rate estimation: svec'd Gram matrices at sqrt(Q1) z
// with z drawn from the proposal ladder, plus the log density ratios
// log phi(z) - log mix(z). With a single unit scale the ratios are exactly 0.
// Row-major so each sample's svec row is contiguous.
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TiltSample {
  RowMajorMatrix gram_svec;   // samples x p
  Eigen::VectorXd log_ratio;  // samples
  double lse_ratio = 0.0;     // log sum_s exp(log_ratio_s)
  long long samples = 0;
};

TiltSample build_tilt_sample(const ArchSpec& spec, int layer, const PsdMatrix& q1,
                             long long samples, const std::vector<double>& scales,
                             RngStream stream, int workers) {
  if (samples < 1) throw std::invalid_argument("tilt sample: samples must be >= 1");
  if (scales.empty()) throw std::invalid_argument("tilt sample: need at least one scale");
  GramEvaluator eval(spec, layer);
  PsdMatrix root = psd_sqrt(q1);
  const Eigen::MatrixXd& sq = root.mat();
  const int din = eval.input_dim();
  const int dout = eval.output_dim();
  const int p = dout * (dout + 1) / 2;
  const int kscales = static_cast<int>(scales.size());

  TiltSample out;
  out.samples = samples;
  out.gram_svec.resize(samples, p);
  out.log_ratio.resize(samples);

  const long long block = 8192;
  const int nblocks = static_cast<int>((samples + block - 1) / block);
  const bool unit_only = (kscales == 1 && scales[0] == 1.0);

  parallel_blocks(nblocks, workers, [&](int b) {
    GramEvaluator local(eval);
    RngStream rs = stream.split(static_cast<std::uint64_t>(b));
    long long lo = b * block;
    long long hi = std::min(samples, lo + block);
    Eigen::VectorXd z(din), x(din);
    Eigen::MatrixXd g(dout, dout);
    std::vector<double> logphi(kscales);
    for (long long s = lo; s < hi; ++s) {
      double scale = scales[static_cast<int>(s % kscales)];
      for (int i = 0; i < din; ++i) z(i) = scale * rs.next_normal();
      if (unit_only) {
        out.log_ratio(s) = 0.0;
      } else {
        double zz = z.squaredNorm();
        for (int k = 0; k < kscales; ++k)
          logphi[k] = -din * std::log(scales[k]) - 0.5 * zz / (scales[k] * scales[k]);
        out.log_ratio(s) = -0.5 * zz - (logsumexp(logphi) - std::log(double(kscales)));
      }
      x.noalias() = sq * z;
      local.gram(x, g);
      double* row = &out.gram_svec(s, 0);
      int idx = 0;
      for (int i = 0; i < dout; ++i) {
        row[idx++] = g(i, i);
        for (int j = i + 1; j < dout; ++j) row[idx++] = M_SQRT2 * g(i, j);
      }
    }
  });

  std::vector<double> lr(out.log_ratio.data(), out.log_ratio.data() + samples);
  out.lse_ratio = logsumexp(lr);
  return out;
}

struct MgfEval {
  double log_value = 0.0;
  bool infinite = false;
  double tail_mass = 0.0;
};

// log M and the tail diagnostic from precomputed log-weights lw = y + ratio.
MgfEval eval_log_mgf(const std::vector<double>& lw, double lse_ratio, double top_fraction,
                     double mass_limit) {
  MgfEval out;
  for (double v : lw) {
    if (!std::isfinite(v)) {
      out.infinite = true;
      out.tail_mass = 1.0;
      out.log_value = kInf;
      return out;
    }
  }
  double lse = logsumexp(lw);
  long long top = std::max<long long>(1, static_cast<long long>(
                                             std::ceil(top_fraction * double(lw.size()))));
  std::vector<double> copy(lw);
  std::nth_element(copy.begin(), copy.begin() + (copy.size() - top), copy.end());
  std::vector<double> tail(copy.end() - top, copy.end());
  out.tail_mass = std::exp(logsumexp(tail) - lse);
  if (out.tail_mass > mass_limit) {
    out.infinite = true;
    out.log_value = kInf;
    return out;
  }
  out.log_value = lse - lse_ratio;
  return out;
}

}  // namespace

Eigen::VectorXd sym_to_vec(const Eigen::MatrixXd& m) {
  const int d = static_cast<int>(m.rows());
  Eigen::VectorXd v(d * (d + 1) / 2);
  int idx = 0;
  for (int i = 0; i < d; ++i) {
    v(idx++) = m(i, i);
    for (int j = i + 1; j < d; ++j) v(idx++) = M_SQRT2 * 0.5 * (m(i, j) + m(j, i));
  }
  return v;
}

Eigen::MatrixXd vec_to_sym(const Eigen::VectorXd& v, int dim) {
  Eigen::MatrixXd m(dim, dim);
  int idx = 0;
  for (int i = 0; i < dim; ++i) {
    m(i, i) = v(idx++);
    for (int j = i + 1; j < dim; ++j) {
      double x = v(idx++) / M_SQRT2;
      m(i, j) = x;
      m(j, i) = x;
    }
  }
  return m;
}

MgfEstimate log_mgf(const ArchSpec& spec, int layer, const Eigen::MatrixXd& tilt,
                    const PsdMatrix& q1, RngStream stream, const MgfOptions& opts) {
  if (tilt.rows() != spec.flat_dim(layer + 1) || tilt.cols() != tilt.rows())
    throw std::invalid_argument("log_mgf: tilt dimension mismatch");
  Eigen::MatrixXd sym = 0.5 * (tilt + tilt.transpose());
  TiltSample ts = build_tilt_sample(spec, layer, q1, opts.samples, opts.proposal_scales, stream,
                                    opts.workers);
  Eigen::VectorXd tv = sym_to_vec(sym);
  Eigen::VectorXd y = ts.gram_svec * tv;

  std::vector<double> lw(ts.samples);
  for (long long s = 0; s < ts.samples; ++s) lw[s] = y(s) + ts.log_ratio(s);
  MgfEval ev = eval_log_mgf(lw, ts.lse_ratio, opts.tail_top_fraction, opts.tail_mass_limit);

  MgfEstimate est;
  est.samples = ts.samples;
  est.tail_mass = ev.tail_mass;
  est.infinite = ev.infinite;
  est.log_value = ev.log_value;
  if (!ev.infinite) {
    // Delta-method SE of log(sum a / sum b) with a = exp(y+r), b = exp(r).
    double lse_a = logsumexp(lw);
    std::vector<double> u(ts.samples);
    double n = static_cast<double>(ts.samples);
    for (long long s = 0; s < ts.samples; ++s) {
      double ai = std::exp(lw[s] - lse_a) * n;
      double bi = std::exp(ts.log_ratio(s) - ts.lse_ratio) * n;
      u[s] = ai - bi;
    }
    est.std_error = std::sqrt(sample_variance(u) / n);
  }
  return est;
}

double safe_tilt_radius(const ArchSpec& spec, int layer, const PsdMatrix& q1, int probe_samples,
                        RngStream stream) {
  GramEvaluator eval(spec, layer);
  const int din = eval.input_dim();
  const int dout = eval.output_dim();
  // Probe the quadratic-growth constant over several radii scales; the ratio
  // sup is typically approached at large ||z||.
  const double scales[] = {1.0, 4.0, 16.0, 64.0};
  double best = 0.0;
  Eigen::VectorXd z(din);
  Eigen::MatrixXd g(dout, dout);
  for (size_t k = 0; k < 4; ++k) {
    RngStream rs = stream.split(static_cast<std::uint64_t>(k));
    int count = std::max(1, probe_samples / 4);
    for (int s = 0; s < count; ++s) {
      for (int i = 0; i < din; ++i) z(i) = scales[k] * rs.next_normal();
      eval.gram(z, g);
      best = std::max(best, g.norm() / (1.0 + z.squaredNorm()));
    }
  }
  double a_hat = 1.5 * best;
  double q1_norm = spectral_norm(q1);
  if (a_hat <= 0.0 || q1_norm <= 0.0) return kInf;
  return 1.0 / (2.0 * a_hat * q1_norm);
}

RateResult rate_layer(const ArchSpec& spec, int layer, const PsdMatrix& q2, const PsdMatrix& q1,
                      RngStream stream, const RateOptions& opts) {
  if (q2.dim() != spec.flat_dim(layer + 1))
    throw std::invalid_argument("rate_layer: Q2 dimension mismatch");
  if (q1.dim() != spec.flat_dim(layer))
    throw std::invalid_argument("rate_layer: Q1 dimension mismatch");
  const int d = q2.dim();
  const int p = d * (d + 1) / 2;
  const double n = static_cast<double>(opts.mc_samples);

  Eigen::VectorXd target = sym_to_vec(q2.mat());
  double grad_tol = opts.grad_tol * (1.0 + q2.frobenius_norm());

  double radius = opts.trust_init_fraction *
                  safe_tilt_radius(spec, layer, q1, opts.probe_samples, stream.split("radius"));
  radius = std::min(radius, opts.trust_cap);
  if (!(radius > 0.0)) radius = opts.trust_cap;

  int refresh = 0;
  TiltSample ts = build_tilt_sample(spec, layer, q1, opts.mc_samples, opts.proposal_scales,
                                    stream.split("base-0"), opts.workers);

  Eigen::VectorXd q = Eigen::VectorXd::Zero(p);
  std::vector<double> lw(ts.samples);
  Eigen::VectorXd weights(ts.samples);

  // Evaluates the empirical objective at qv; infinite MGF maps to -inf.
  auto objective = [&](const Eigen::VectorXd& qv, MgfEval* ev_out) {
    Eigen::VectorXd y = ts.gram_svec * qv;
    for (long long s = 0; s < ts.samples; ++s) lw[s] = y(s) + ts.log_ratio(s);
    MgfEval ev = eval_log_mgf(lw, ts.lse_ratio, 0.001, 0.5);
    if (ev_out) *ev_out = ev;
    if (ev.infinite) return -kInf;
    return target.dot(qv) - ev.log_value;
  };

  // Tilted-mean gradient at the current lw (objective must have been
  // evaluated at q first so lw matches).
  auto gradient_at_current = [&]() {
    double lse = logsumexp(lw);
    for (long long s = 0; s < ts.samples; ++s) weights(s) = std::exp(lw[s] - lse);
    Eigen::VectorXd mean_g = ts.gram_svec.transpose() * weights;
    return Eigen::VectorXd(target - mean_g);
  };
  auto ess_of_weights = [&]() {
    double s2 = weights.squaredNorm();
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
  };

  MgfEval ev;
  double f = objective(q, &ev);
  Eigen::VectorXd grad = gradient_at_current();
  double gn = grad.norm();
  double eta = 0.25 * radius / (gn + 1e-300);
  bool expansion_denied = false;
  double plateau_tol = opts.plateau_tol * (1.0 + q2.frobenius_norm());
  int plateau_count = 0;
  double gain_since_expand = 0.0;

  RateResult res;
  res.mc_samples = opts.mc_samples;

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    if (ess_of_weights() < opts.ess_refresh_fraction * n) {
      if (refresh >= opts.max_refreshes) break;  // weights no longer usable
      ++refresh;
      ts = build_tilt_sample(spec, layer, q1, opts.mc_samples, opts.proposal_scales,
                             stream.split("base-" + std::to_string(refresh)), opts.workers);
      f = objective(q, &ev);
      grad = gradient_at_current();
      gn = grad.norm();
    }
    if (gn < grad_tol) break;

    bool accepted = false;
    bool was_clipped = false;
    Eigen::VectorXd q_try;
    double f_try = 0.0;
    while (eta * gn > 1e-14 * (1.0 + radius)) {
      q_try = q + eta * grad;
      was_clipped = false;
      double qn = q_try.norm();
      if (qn > radius) {
        q_try *= radius / qn;
        was_clipped = true;
      }
      f_try = objective(q_try, nullptr);
      double gain = f_try - f;
      double need = was_clipped ? 0.0 : 1e-4 * eta * gn * gn;
      if (std::isfinite(f_try) && gain > need) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    double gain = f_try - f;
    q = q_try;
    f = objective(q, &ev);  // refresh lw at the accepted point
    grad = gradient_at_current();
    gn = grad.norm();
    eta *= 1.3;
    gain_since_expand += gain;

    bool expanded = false;
    if (q.norm() >= 0.999 * radius && radius < opts.trust_cap &&
        gain_since_expand >= plateau_tol) {
      // Probe further along the current direction before expanding; growing
      // the region is only worthwhile while the objective is still moving.
      Eigen::VectorXd probe = q * opts.trust_expand;
      double f_probe = objective(probe, nullptr);
      f = objective(q, &ev);  // restore lw at q
      grad = gradient_at_current();
      gn = grad.norm();
      if (std::isfinite(f_probe)) {
        radius = std::min(radius * opts.trust_expand, opts.trust_cap);
        expansion_denied = false;
        expanded = true;
        gain_since_expand = 0.0;
      } else {
        expansion_denied = true;
      }
    }
    if (expanded) {
      plateau_count = 0;
    } else {
      plateau_count = (gain < plateau_tol) ? plateau_count + 1 : 0;
      if (plateau_count >= 3) break;  // remaining headroom is below resolution
    }
  }

  // Final value from a fresh sample: the ascent can overfit its own draws
  // (the target may escape the sampled Gram hull in thin directions), and a
  // held-out evaluation is immune to that.
  {
    ts = build_tilt_sample(spec, layer, q1, opts.mc_samples, opts.proposal_scales,
                           stream.split("final"), opts.workers);
    double f_fresh = objective(q, &ev);
    if (std::isfinite(f_fresh)) {
      res.value = std::max(0.0, f_fresh);
    } else {
      res.value = 0.0;
      expansion_denied = true;
    }
  }
  res.tilt = vec_to_sym(q, d);
  res.iterations = iter;
  res.grad_norm = gn;
  res.trust_radius = radius;
  res.refreshes = refresh;
  res.domain_limited =
      (q.norm() >= 0.995 * radius) && ((grad.dot(q) > 0.0) || expansion_denied);
  return res;
}

ChainRateResult rate_chain(const ArchSpec& spec, const std::vector<PsdMatrix>& qs,
                           const PsdMatrix& k1, RngStream stream, const RateOptions& opts) {
  if (static_cast<int>(qs.size()) != spec.L())
    throw std::invalid_argument("rate_chain: expected L kernels Q_2..Q_{L+1}");
  ChainRateResult out;
  for (int ell = 1; ell <= spec.L(); ++ell) {
    const PsdMatrix& prev = (ell == 1) ? k1 : qs[ell - 2];
    const PsdMatrix& next = qs[ell - 1];
    RateResult r = rate_layer(spec, ell, next, prev,
                              stream.split("layer-" + std::to_string(ell)), opts);
    out.total += spec.alphas.at(ell - 1) * r.value;
    out.domain_limited = out.domain_limited || r.domain_limited;
    out.per_layer.push_back(std::move(r));
  }
  return out;
}

MarginalResult rate_marginal(const ArchSpec& spec, const PsdMatrix& q, const KernelChain& limit,
                             RngStream stream, const MarginalOptions& opts) {
  const int L = spec.L();
  if (L < 1) throw std::invalid_argument("rate_marginal: need L >= 1");
  if (L > 2) throw std::invalid_argument("rate_marginal: desk scale supports L <= 2");
  if (limit.layers() != L + 1) throw std::invalid_argument("rate_marginal: bad limit chain");

  MarginalResult out;
  if (L == 1) {
    RateResult r = rate_layer(spec, 1, q, limit.K(1), stream, opts.rate);
    out.value = spec.alphas.at(0) * r.value;
    out.converged = true;
    out.bracket = 0.0;
    return out;
  }

  // L == 2: one intermediate kernel Q_2, parameterized as s * K^(2)_limit.
  const PsdMatrix& base = limit.K(2);
  auto total_at = [&](double s) {
    std::vector<PsdMatrix> qs = {PsdMatrix(s * base.mat()), q};
    // Same stream for every evaluation: common random numbers keep the grid
    // objective smooth in s.
    return rate_chain(spec, qs, limit.K(1), stream, opts.rate).total;
  };

  double lo = opts.scale_lo, hi = opts.scale_hi;
  double best_s = 1.0, best_v = kInf;
  for (int level = 0; level <= opts.refinements; ++level) {
    int pts = opts.coarse_points;
    double step = (hi - lo) / (pts - 1);
    best_v = kInf;
    for (int k = 0; k < pts; ++k) {
      double s = lo + k * step;
      double v = total_at(s);
      if (v < best_v) {
        best_v = v;
        best_s = s;
      }
    }
    double new_lo = std::max(opts.scale_lo * 0.25, best_s - step);
    double new_hi = best_s + step;
    lo = new_lo;
    hi = new_hi;
  }
  out.value = best_v;
  out.bracket = hi - lo;
  out.minimizers.push_back(PsdMatrix(best_s * base.mat()));
  out.converged = (best_s > opts.scale_lo + 1e-12);
  return out;
}

double output_rate(const ArchSpec& spec, const PsdMatrix& q, const Eigen::VectorXd& z,
                   const KernelChain& limit, RngStream stream, const MarginalOptions& opts) {
  const int d = q.dim();
  const int c = spec.output_channels;
  if (z.size() != static_cast<long long>(c) * d)
    throw std::invalid_argument("output_rate: Z must have C_{L+1} blocks of dim D_{L+1}");
  double norm_term = 0.0;
  for (int b = 0; b < c; ++b) {
    double v = generalized_q_norm(q, z.segment(static_cast<long long>(b) * d, d));
    if (std::isinf(v)) return kInf;
    norm_term += v;
  }
  return 0.5 * norm_term + rate_marginal(spec, q, limit, stream, opts).value;
}

bool EventSpec::evaluate(const PsdMatrix& k) const {
  double v = 0.0;
  switch (stat) {
    case Stat::Entry:
      v = k(row, col);
      break;
    case Stat::FroNorm:
      v = k.frobenius_norm();
      break;
  }
  return greater ? (v >= level) : (v <= level);
}

std::vector<EmpiricalRateRow> empirical_rate(const ArchSpec& spec, const PsdMatrix& k1,
                                             const EventSpec& event,
                                             const std::vector<long long>& n_list,
                                             long long replicas, RngStream stream,
                                             const McOptions& opts) {
  if (event.kernel_index < 2 || event.kernel_index > spec.L() + 1)
    throw std::invalid_argument("empirical_rate: kernel index out of range");
  if (replicas < 1) throw std::invalid_argument("empirical_rate: replicas must be >= 1");

  std::vector<EmpiricalRateRow> rows;
  for (long long n : n_list) {
    RngStream ns = stream.split("n-" + std::to_string(n));
    const long long block = 256;
    const int nblocks = static_cast<int>((replicas + block - 1) / block);
    std::vector<long long> hits_per_block(nblocks, 0);
    parallel_blocks(nblocks, opts.workers, [&](int b) {
      RngStream bs = ns.split(static_cast<std::uint64_t>(b));
      long long lo = b * block;
      long long hi = std::min(replicas, lo + block);
      long long h = 0;
      McOptions serial;  // replica-level parallelism only
      serial.workers = 1;
      serial.block = opts.block;
      for (long long r = lo; r < hi; ++r) {
        RngStream rs = bs.split(static_cast<std::uint64_t>(r - lo));
        PsdMatrix k = k1;
        for (int ell = 1; ell <= event.kernel_index - 1; ++ell) {
          k = transition_sample(spec, ell, k, spec.channels_at(ell, n),
                                rs.split("layer-" + std::to_string(ell)), serial);
        }
        if (event.evaluate(k)) ++h;
      }
      hits_per_block[b] = h;
    });
    long long hits = 0;
    for (long long h : hits_per_block) hits += h;

    EmpiricalRateRow row;
    row.n = n;
    row.replicas = replicas;
    row.hits = hits;
    row.p_hat = static_cast<double>(hits) / static_cast<double>(replicas);
    row.rate_estimate = hits > 0 ? -std::log(row.p_hat) / static_cast<double>(n) : kInf;
    Interval ci = wilson_interval(hits, replicas, kWilson99);
    row.ci_lo = ci.hi > 0.0 ? -std::log(ci.hi) / static_cast<double>(n) : kInf;
    row.ci_hi = ci.lo > 0.0 ? -std::log(ci.lo) / static_cast<double>(n) : kInf;
    row.undersampled = hits < 10;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace convlab
