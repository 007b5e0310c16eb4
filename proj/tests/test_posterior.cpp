#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "convlab/posterior.hpp"
#include "convlab/rng.hpp"
#include "oracles.hpp"

using namespace convlab;

namespace {

Observations scalar_obs(double y, double beta = 1.0) {
  Observations o;
  o.y = Eigen::VectorXd::Constant(1, y);
  o.channels = 1;
  o.beta = beta;
  return o;
}

PsdMatrix random_psd(int dim, RngStream& s) {
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = s.next_normal();
  return PsdMatrix(a * a.transpose());
}

}  // namespace

TEST_CASE("log likelihood: zero residual, direct value, additivity") {
  Observations o = scalar_obs(2.0);
  Eigen::VectorXd s = o.y;
  CHECK(log_likelihood(o, s) == doctest::Approx(0.5 * std::log(1.0 / (2.0 * M_PI))).epsilon(1e-14));

  Eigen::VectorXd far = Eigen::VectorXd::Constant(1, 4.0);  // s - y = 2
  CHECK(log_likelihood(o, far) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 2.0).epsilon(1e-14));

  // Additivity over components.
  Observations multi;
  multi.channels = 1;
  multi.beta = 0.7;
  multi.y = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd sv(4);
  sv << 1.0, -0.5, 0.25, 2.0;
  double total = log_likelihood(multi, sv);
  double parts = 0.0;
  for (int i = 0; i < 4; ++i) {
    Observations one;
    one.channels = 1;
    one.beta = 0.7;
    one.y = Eigen::VectorXd::Zero(1);
    parts += log_likelihood(one, sv.segment(i, 1));
  }
  CHECK(total == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("psi: zero kernel, scalar closed form, Kronecker block identity") {
  Observations o = scalar_obs(2.0);
  CHECK(psi(PsdMatrix::Zero(1), o) == doctest::Approx(4.0).epsilon(1e-14));  // beta*||y||^2

  // K=1, beta=1, y=2: 4/2 + ln 2.
  CHECK(psi(PsdMatrix::Identity(1), o) == doctest::Approx(2.0 + std::log(2.0)).epsilon(1e-13));
  CHECK(std::abs(psi(PsdMatrix::Identity(1), o) - (2.0 + std::log(2.0))) < 1e-12);

  // Two equal channel blocks double the potential.
  Observations two;
  two.channels = 2;
  two.beta = 1.0;
  two.y = Eigen::VectorXd::Constant(2, 2.0);
  CHECK(psi(PsdMatrix::Identity(1), two) ==
        doctest::Approx(2.0 * psi(PsdMatrix::Identity(1), o)).epsilon(1e-12));

  // Block factorization equals the full Kronecker formula.
  RngStream s(55);
  for (int trial = 0; trial < 50; ++trial) {
    int d = 2 + static_cast<int>(s.next_u64() % 3);
    int c = 1 + static_cast<int>(s.next_u64() % 3);
    double beta = 0.25 + 2.0 * s.next_uniform();
    PsdMatrix k = random_psd(d, s);
    Observations obs;
    obs.channels = c;
    obs.beta = beta;
    obs.y = Eigen::VectorXd::Zero(static_cast<long long>(c) * d);
    for (int i = 0; i < obs.y.size(); ++i) obs.y(i) = s.next_normal();

    Eigen::MatrixXd big = Eigen::MatrixXd::Identity(c * d, c * d);
    for (int b = 0; b < c; ++b) big.block(b * d, b * d, d, d) += beta * k.mat();
    double quad = obs.beta * obs.y.dot(big.llt().solve(obs.y));
    double logdet = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(big);
    for (int i = 0; i < c * d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    double oracle = quad + logdet;
    CHECK(psi(k, obs) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("psi: nonnegative on random PSD inputs and vanishing as beta -> 0") {
  RngStream s(77);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 1 + static_cast<int>(s.next_u64() % 4);
    PsdMatrix k = random_psd(d, s);
    Observations obs;
    obs.channels = 1;
    obs.beta = 0.1 + 3.0 * s.next_uniform();
    obs.y = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) obs.y(i) = s.next_normal();
    CHECK(psi(k, obs) >= 0.0);
  }

  Observations tiny = scalar_obs(2.0, 1e-12);
  CHECK(psi(PsdMatrix::Identity(1), tiny) < 1e-10);
}

TEST_CASE("posterior weights: uniform for equal kernels, normalized, monotone in psi") {
  Observations o = scalar_obs(2.0);
  std::vector<PsdMatrix> equal(5, PsdMatrix::Identity(1));
  auto w = posterior_weights(equal, o);
  double sum = 0.0;
  for (double x : w) {
    CHECK(x == doctest::Approx(0.2).epsilon(1e-12));
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);

  // Psi(K=1|y=2) < Psi(K=0|y=2), so the K=1 sample gets the larger weight.
  std::vector<PsdMatrix> pair = {PsdMatrix::Identity(1), PsdMatrix::Zero(1)};
  auto w2 = posterior_weights(pair, o);
  CHECK(psi(pair[0], o) < psi(pair[1], o));
  CHECK(w2[0] > w2[1]);
  CHECK(std::abs(w2[0] + w2[1] - 1.0) <= 1e-12);
}

TEST_CASE("posterior expectation: constants, uniform mean, ESS") {
  Observations o = scalar_obs(2.0);
  std::vector<PsdMatrix> ks = {PsdMatrix::Identity(1), PsdMatrix::Zero(1),
                               PsdMatrix(Eigen::MatrixXd::Constant(1, 1, 2.0))};
  auto w = posterior_weights(ks, o);
  WeightedEstimate c = posterior_expectation([](const PsdMatrix&) { return 3.25; }, ks, w);
  CHECK(c.value == doctest::Approx(3.25).epsilon(1e-12));

  std::vector<double> uniform(3, 1.0 / 3.0);
  WeightedEstimate m =
      posterior_expectation([](const PsdMatrix& k) { return k(0, 0); }, ks, uniform);
  CHECK(m.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.ess == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("posterior expectation: scalar conjugate quadrature oracle within 1%") {
  // Prior: K = mean of C squared normals ~ Gamma(C/2, rate C/2).
  // Posterior reweights by exp(-Psi/2); compare against direct quadrature.
  const int c_channels = 64;
  const int replicas = 40000;
  Observations o = scalar_obs(2.0);
  RngStream s(2025);
  std::vector<PsdMatrix> ks;
  ks.reserve(replicas);
  for (int r = 0; r < replicas; ++r) {
    double acc = 0.0;
    for (int c = 0; c < c_channels; ++c) {
      double z = s.next_normal();
      acc += z * z;
    }
    ks.push_back(PsdMatrix(Eigen::MatrixXd::Constant(1, 1, acc / c_channels)));
  }
  auto w = posterior_weights(ks, o);
  WeightedEstimate est = posterior_expectation([](const PsdMatrix& k) { return k(0, 0); }, ks, w);

  auto psi_scalar = [&](double k) { return 4.0 / (1.0 + k) + std::log(1.0 + k); };
  auto weight = [&](double k) {
    return std::exp(-0.5 * psi_scalar(k)) * oracles::gamma_pdf(k, c_channels / 2.0,
                                                               c_channels / 2.0);
  };
  double numer = oracles::simpson([&](double k) { return k * weight(k); }, 1e-9, 4.0, 4000);
  double denom = oracles::simpson(weight, 1e-9, 4.0, 4000);
  double oracle = numer / denom;
  CHECK(std::abs(est.value - oracle) <= 0.01 * oracle);
  CHECK(est.ess > replicas / 4.0);
}
