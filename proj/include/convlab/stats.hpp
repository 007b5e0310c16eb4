#pragma once

#include <Eigen/Dense>
#include <vector>

#include "convlab/rng.hpp"

namespace convlab {

double logsumexp(const std::vector<double>& xs);
double mean(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);
/// Median by full sort (deterministic).
double median(std::vector<double> xs);

double normal_cdf(double x);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
/// Wilson score interval for a binomial proportion; z is the normal quantile
/// of the desired level (e.g. 2.5758 for 99%).
Interval wilson_interval(long long hits, long long trials, double z);

struct TestResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against the standard normal.
/// P-value via the asymptotic Kolmogorov distribution with the Stephens
/// small-sample correction.
TestResult ks_test_standard_normal(std::vector<double> sample);

/// Two-sample energy-distance test with a label-permutation null.
/// Rows of x and y are observations.
TestResult energy_distance_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                int permutations, RngStream stream);

}  // namespace convlab
