#pragma once

#include <span>

namespace pulse {

struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;        ///< sample sd (n − 1); 0 when n < 2
  double std_error = 0.0;
  std::size_t n = 0;
};

SampleSummary summarize(std::span<const double> x);

struct PairedTest {
  double mean_diff = 0.0;  ///< mean of x − y
  double t_stat = 0.0;
  double p_value = 1.0;    ///< one-sided, H1: mean(x) < mean(y)
  std::size_t n = 0;
};

/// Paired one-sided t-test of H1: E[x − y] < 0. Identical samples give p = 1.
PairedTest paired_t_less(std::span<const double> x, std::span<const double> y);

/// Least-squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);

}  // namespace pulse
