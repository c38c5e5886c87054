#include "pulse/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "pulse/error.hpp"

namespace pulse {

SampleSummary summarize(std::span<const double> x) {
  SampleSummary s;
  s.n = x.size();
  if (x.empty()) return s;
  for (double v : x) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.std_error = s.sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

PairedTest paired_t_less(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("paired test: samples differ in length");
  if (x.size() < 2) throw InputError("paired test: need at least two pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const SampleSummary s = summarize(d);
  PairedTest r;
  r.n = s.n;
  r.mean_diff = s.mean;
  if (s.std_error == 0.0) {
    r.t_stat = s.mean < 0 ? -INFINITY : (s.mean > 0 ? INFINITY : 0.0);
    r.p_value = s.mean < 0 ? 0.0 : 1.0;
    return r;
  }
  r.t_stat = s.mean / s.std_error;
  boost::math::students_t dist(static_cast<double>(s.n - 1));
  r.p_value = boost::math::cdf(dist, r.t_stat);
  return r;
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("ols_slope: need two or more paired points");
  const SampleSummary sx = summarize(x), sy = summarize(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - sx.mean) * (y[i] - sy.mean);
    sxx += (x[i] - sx.mean) * (x[i] - sx.mean);
  }
  if (sxx == 0.0) throw InputError("ols_slope: x has no spread");
  return sxy / sxx;
}

}  // namespace pulse
