#include <cmath>

#include "doctest.h"
#include "pulse/calibration.hpp"
#include "pulse/error.hpp"

using namespace pulse;

namespace {

double normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-12, 50);
}

LawSampler gaussian(double m, double s) {
  return [m, s](Rng& rng) { return Vector::Constant(1, rng.normal(m, s)); };
}

HistoricalDataset pairs(std::size_t n, const std::function<double(double)>& f, double noise, std::uint64_t seed) {
  Rng rng(seed);
  HistoricalDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform();
    d.s.push_back(Matrix::Constant(1, 1, s));
    d.w.push_back(Matrix::Constant(1, 1, f(s) + rng.normal(0.0, noise)));
  }
  return d;
}

}  // namespace

TEST_CASE("gaussian D_t closed forms") {
  CHECK(gaussian_dt({0.7, 1.3}, {0.7, 1.3}) == 0.0);
  CHECK(gaussian_dt({2.0, 1.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(std::sqrt(gaussian_dt({2.0, 1.0}, {0.0, 1.0})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(gaussian_dt({0.0, 0.0}, {0.0, 1.0}), InputError);
  CHECK_THROWS_AS(gaussian_dt({0.0, 1.0}, {0.0, -1.0}), InputError);

  const auto kl_integrand = [](double y) {
    const double p = normal_pdf(y, 0.3, 1.0), q = normal_pdf(y, -0.1, 1.2);
    return p > 0.0 ? p * std::log(p / q) : 0.0;
  };
  const double kl = integrate(kl_integrand, -15.0, 15.0);
  CHECK(std::abs(gaussian_dt({0.3, 1.0}, {-0.1, 1.2}) - 0.5 * kl) <= 1e-6);
}

TEST_CASE("gaussian D_t invariants") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const GaussianConditional p{rng.normal(), 0.1 + rng.uniform()};
    const GaussianConditional q{rng.normal(), 0.1 + rng.uniform()};
    CHECK(gaussian_dt(p, q) >= 0.0);
    CHECK(gaussian_dt(p, p) == 0.0);
    const double d = rng.uniform(0.01, 2.0);
    const double one = std::sqrt(gaussian_dt({d, 1.0}, {0.0, 1.0}));
    const double two = std::sqrt(gaussian_dt({2.0 * d, 1.0}, {0.0, 1.0}));
    CHECK(two == doctest::Approx(2.0 * one).epsilon(1e-12));
  }
  const std::vector<GaussianConditional> a = {{0, 1}, {1, 1}}, b = {{1, 1}, {1, 2}};
  CHECK(gaussian_dt(a, b) == doctest::Approx(gaussian_dt(a[0], b[0]) + gaussian_dt(a[1], b[1])));
}

TEST_CASE("TV check against Pinsker") {
  Rng rng(2);
  const auto same = tv_kl_check(gaussian(0, 1), gaussian(0, 1), default_test_family(), 0.0, 100000, rng);
  CHECK(same.gap < 0.02);

  const std::vector<TestFunction> sign = {[](const Vector& y) { return y(0) > 0.5 ? 1.0 : -1.0; }};
  const double bound = std::sqrt(gaussian_dt({0, 1}, {1, 1}));
  CHECK(bound == doctest::Approx(0.5));
  const auto shifted = tv_kl_check(gaussian(0, 1), gaussian(1, 1), sign, bound, 200000, rng);
  const double exact_tv = 2.0 * normal_cdf(0.5) - 1.0;
  CHECK(exact_tv == doctest::Approx(0.3829).epsilon(1e-3));
  CHECK(std::abs(shifted.gap - exact_tv) <= 4.0 * shifted.std_error);
  CHECK(shifted.passed);

  const auto violated = tv_kl_check(gaussian(0, 1), gaussian(3, 1), sign, 0.5, 100000, rng);
  CHECK_FALSE(violated.passed);
  CHECK(violated.margin < 0.0);
}

TEST_CASE("Lemma 1 numeric check over random Gaussian pairs") {
  Rng rng(3);
  const auto family = default_test_family(-4.0, 4.0, 41);
  for (int rep = 0; rep < 30; ++rep) {
    const double mu = rng.normal(), mu_hat = rng.normal();
    const double bound = std::sqrt(gaussian_dt({mu, 1.0}, {mu_hat, 1.0}));
    const auto r = tv_kl_check(gaussian(mu, 1.0), gaussian(mu_hat, 1.0), family, bound, 20000, rng);
    CHECK(r.passed);
  }
}

namespace {

class UnitLaw final : public ConditionalLaw {
 public:
  std::vector<GaussianConditional> conditional(std::span<const Vector> h) const override {
    return {{0.3 + 0.8 * h.back()(0), 1.0}};
  }
};

}  // namespace

TEST_CASE("imputed-feature error is bounded through D_t") {
  // Unit-variance imputer with a deliberately wrong slope.
  LinearArParams p;
  p.coefficients = Matrix::Constant(1, 1, 0.5);
  p.intercept = Vector::Constant(1, 0.2);
  p.residual_sd = Vector::Constant(1, 1.0);
  Imputer imp = Imputer::linear_ar(p, 1);
  imp.set_analytic(false);
  imp.set_mc_samples(64);
  const FeatureMap map = FeatureMap::synthetic_interaction();
  const UnitLaw truth;
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::vector<Vector> history = {Vector::Constant(1, rng.uniform(-1.0, 1.0))};
    const auto law = truth.conditional(history);
    const auto model = imp.conditional(history);
    const double dt = gaussian_dt(law[0], model[0]);
    for (std::size_t arm : {0u, 1u}) {
      const Vector exact = map.phi(map.assemble(history[0], Vector::Constant(1, law[0].mean)), history[0], arm);
      const auto est = expected_features(imp, map, history, arm, rng);
      const double err = (exact - est.phi).cwiseAbs().maxCoeff();
      // Equality holds for unit variances, so the slack is pure Monte-Carlo noise over 400 checks.
      CHECK(err <= 2.0 * std::sqrt(dt) + 4.0 * est.std_error.maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("band: noiseless zero regression") {
  const auto data = pairs(1000, [](double) { return 0.0; }, 0.0, 5);
  BandOptions opt;
  opt.fit_target = [](const HistoricalDataset&) { return Imputer::null_imputer(1, 1); };
  const auto est = estimate_dt_band(data, Matrix(), opt);
  CHECK(est.dhat == 0.0);
  CHECK(est.half_widths.maxCoeff() == 0.0);
}

TEST_CASE("band width shrinks with N") {
  double prev = INFINITY;
  for (std::size_t n : {500u, 2000u, 8000u}) {
    double width = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const auto data = pairs(n, [](double) { return 0.0; }, 0.3, 100 * n + rep);
      BandOptions opt;
      opt.split_seed = rep;
      opt.fit_target = [](const HistoricalDataset&) { return Imputer::null_imputer(1, 1); };
      const auto est = estimate_dt_band(data, Matrix(), opt);
      CHECK(est.dhat >= est.half_widths.maxCoeff());
      width += est.half_widths.mean();
    }
    CHECK(width / 10.0 < prev);
    prev = width / 10.0;
  }
}

TEST_CASE("band with the reference fit as target") {
  const auto data = pairs(2000, [](double s) { return s * s; }, 0.2, 6);
  BandOptions opt;
  const auto est = estimate_dt_band(data, Matrix(), opt);
  CHECK(est.cross_term.maxCoeff() == 0.0);
  CHECK(est.dhat == doctest::Approx(est.half_widths.maxCoeff()));
  CHECK(est.plug_in_dt() == doctest::Approx(est.dhat * est.dhat));
  const auto j = est.report();
  CHECK(j["surrogate"].get<bool>());
  CHECK(j["grid"].size() == static_cast<std::size_t>(est.grid.rows()));
}

TEST_CASE("band coverage with a known regression function") {
  const auto f = [](double s) { return 0.5 * std::sin(2.0 * M_PI * s); };
  int covered = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto data = pairs(2000, f, 0.5, 9000 + rep);
    BandOptions opt;
    opt.alpha = 0.1;
    opt.split_seed = rep;
    const auto est = estimate_dt_band(data, Matrix(), opt);
    double err = 0.0;
    for (Eigen::Index k = 0; k < est.grid.rows(); ++k) {
      if (est.window_counts[static_cast<std::size_t>(k)] < 2) continue;
      err = std::max(err, std::abs(f(est.grid(k, 0)) - est.centers(k, 0)));
    }
    covered += err <= est.half_widths.maxCoeff() ? 1 : 0;
  }
  MESSAGE("band coverage " << covered << "/" << reps);
  CHECK(covered >= static_cast<int>(std::ceil((1.0 - 0.1 - 0.05) * reps)));
}

TEST_CASE("band is monotone in alpha and under grid refinement") {
  const auto data = pairs(3000, [](double s) { return std::cos(3.0 * s); }, 0.4, 7);
  BandOptions opt;
  opt.fit_target = [](const HistoricalDataset& d) { return fit_linear_ar(d, 0, 0.0); };
  double prev = 0.0;
  for (double alpha : {0.5, 0.2, 0.1, 0.05, 0.01}) {
    opt.alpha = alpha;
    const auto est = estimate_dt_band(data, Matrix(), opt);
    CHECK(est.dhat >= prev);
    CHECK(est.cross_term.maxCoeff() > 0.0);
    prev = est.dhat;
  }
  opt.alpha = 0.1;
  const auto coarse = estimate_dt_band(data, Matrix(), opt);
  Matrix fine(2 * coarse.grid.rows() - 1, 1);
  for (Eigen::Index k = 0; k < coarse.grid.rows(); ++k) {
    fine(2 * k, 0) = coarse.grid(k, 0);
    if (k + 1 < coarse.grid.rows()) fine(2 * k + 1, 0) = 0.5 * (coarse.grid(k, 0) + coarse.grid(k + 1, 0));
  }
  opt.bandwidth = coarse.bandwidth;
  const auto refined = estimate_dt_band(data, fine, opt);
  CHECK(refined.dhat >= coarse.dhat - coarse.modulus);
  CHECK(coarse.modulus > 0.0);
}

TEST_CASE("band input errors") {
  BandOptions opt;
  CHECK_THROWS_AS(estimate_dt_band(pairs(3, [](double) { return 0.0; }, 0.1, 1), Matrix(), opt), InputError);
  CHECK_THROWS_AS(estimate_dt_band(pairs(100, [](double) { return 0.0; }, 0.1, 1), Matrix::Zero(3, 2), opt), InputError);
  Matrix far(1, 1);
  far << 50.0;
  CHECK_THROWS_AS(estimate_dt_band(pairs(100, [](double) { return 0.0; }, 0.1, 1), far, opt), InputError);
}
