#include "convlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace convlab {

double logsumexp(const std::vector<double>& xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Interval wilson_interval(long long hits, long long trials, double z) {
  if (trials <= 0) throw std::invalid_argument("wilson_interval: trials must be positive");
  double n = static_cast<double>(trials);
  double p = static_cast<double>(hits) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace {

// P(K > x) for the Kolmogorov distribution.
double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * x * x);
    s += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, s));
}

}  // namespace

TestResult ks_test_standard_normal(std::vector<double> sample) {
  if (sample.empty()) throw std::invalid_argument("ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    double f = normal_cdf(sample[i]);
    double lo = static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(f - lo, hi - f));
  }
  double scale = std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n);
  return {d, kolmogorov_sf(scale * d)};
}

TestResult energy_distance_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                int permutations, RngStream stream) {
  if (x.cols() != y.cols()) throw std::invalid_argument("energy_distance_test: dim mismatch");
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(y.rows());
  const int t = n + m;

  // Pairwise distances of the pooled sample, upper triangle, float storage.
  std::vector<float> dist(static_cast<size_t>(t) * t, 0.0f);
  auto row = [&](int i) -> Eigen::RowVectorXd {
    return i < n ? Eigen::RowVectorXd(x.row(i)) : Eigen::RowVectorXd(y.row(i - n));
  };
  std::vector<Eigen::RowVectorXd> pooled(t);
  for (int i = 0; i < t; ++i) pooled[i] = row(i);
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j) {
      float d = static_cast<float>((pooled[i] - pooled[j]).norm());
      dist[static_cast<size_t>(i) * t + j] = d;
      dist[static_cast<size_t>(j) * t + i] = d;
    }

  std::vector<int> label(t);
  auto estat = [&](const std::vector<int>& lab) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < t; ++i) {
      const float* di = dist.data() + static_cast<size_t>(i) * t;
      for (int j = i + 1; j < t; ++j) {
        double d = di[j];
        if (lab[i] != lab[j]) {
          sxy += d;
        } else if (lab[i] == 0) {
          sxx += d;
        } else {
          syy += d;
        }
      }
    }
    double axy = sxy / (static_cast<double>(n) * m);
    double axx = 2.0 * sxx / (static_cast<double>(n) * n);
    double ayy = 2.0 * syy / (static_cast<double>(m) * m);
    return (static_cast<double>(n) * m / t) * (2.0 * axy - axx - ayy);
  };

  for (int i = 0; i < t; ++i) label[i] = i < n ? 0 : 1;
  double observed = estat(label);

  int ge = 0;
  std::vector<int> perm(t);
  std::iota(perm.begin(), perm.end(), 0);
  for (int b = 0; b < permutations; ++b) {
    // Fisher-Yates on the label vector.
    std::vector<int> lab = label;
    for (int i = t - 1; i > 0; --i) {
      int j = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(lab[i], lab[j]);
    }
    if (estat(lab) >= observed) ++ge;
  }
  double p = (1.0 + ge) / (1.0 + permutations);
  return {observed, p};
}

}  // namespace convlab
