#include "convlab/posterior.hpp"

#include <cmath>
#include <stdexcept>

#include "convlab/stats.hpp"

namespace convlab {

double log_likelihood(const Observations& obs, const Eigen::VectorXd& s) {
  if (s.size() != obs.y.size()) throw std::invalid_argument("log_likelihood: shape mismatch");
  double dbar = static_cast<double>(obs.y.size());
  double resid = (s - obs.y).squaredNorm();
  return 0.5 * dbar * std::log(obs.beta / (2.0 * M_PI)) - 0.5 * obs.beta * resid;
}

double psi(const PsdMatrix& k, const Observations& obs) {
  const int d = k.dim();
  if (obs.y.size() != static_cast<long long>(obs.channels) * d)
    throw std::invalid_argument("psi: observation dimension mismatch");
  if (!(obs.beta > 0.0)) throw std::invalid_argument("psi: beta must be > 0");

  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) + obs.beta * k.mat();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("psi: factorization of I + beta*K failed");

  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;

  double quad = 0.0;
  for (int c = 0; c < obs.channels; ++c) {
    Eigen::VectorXd yc = obs.y.segment(static_cast<long long>(c) * d, d);
    quad += yc.dot(llt.solve(yc));
  }
  double value = obs.beta * quad + obs.channels * logdet;
  // Both terms are nonnegative for PSD K: eigenvalues of I + beta*K are >= 1.
  if (value < -1e-9 * (1.0 + std::abs(obs.beta * quad)))
    throw std::logic_error("psi: negative potential on PSD input");
  return std::max(0.0, value);
}

std::vector<double> posterior_weights(const std::vector<PsdMatrix>& ks, const Observations& obs) {
  if (ks.empty()) throw std::invalid_argument("posterior_weights: empty sample list");
  std::vector<double> logw(ks.size());
  for (size_t i = 0; i < ks.size(); ++i) logw[i] = -0.5 * psi(ks[i], obs);
  double lse = logsumexp(logw);
  std::vector<double> w(ks.size());
  for (size_t i = 0; i < ks.size(); ++i) w[i] = std::exp(logw[i] - lse);
  return w;
}

WeightedEstimate posterior_expectation(const std::function<double(const PsdMatrix&)>& stat,
                                       const std::vector<PsdMatrix>& ks,
                                       const std::vector<double>& weights) {
  if (ks.size() != weights.size() || ks.empty())
    throw std::invalid_argument("posterior_expectation: sample/weight size mismatch");
  double value = 0.0;
  double w2 = 0.0;
  for (size_t i = 0; i < ks.size(); ++i) {
    value += weights[i] * stat(ks[i]);
    w2 += weights[i] * weights[i];
  }
  return {value, w2 > 0.0 ? 1.0 / w2 : 0.0};
}

}  // namespace convlab
