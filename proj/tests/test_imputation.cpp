#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pulse/environments.hpp"
#include "pulse/error.hpp"
#include "pulse/imputation.hpp"

using namespace pulse;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pulse_test_" + name);
}

Vector scalar(double x) { return Vector::Constant(1, x); }

// W_t = c + B (S_t, …, S_{t−m}) + noise, S iid N(0,1) in R^{ds}.
HistoricalDataset linear_data(std::size_t n, std::size_t t0, std::size_t ds, const Matrix& b, double c,
                              double noise, std::uint64_t seed) {
  Rng rng(seed);
  const auto dw = b.rows();
  const auto lag = static_cast<std::size_t>(b.cols()) / ds - 1;
  HistoricalDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix s(static_cast<Eigen::Index>(t0), static_cast<Eigen::Index>(ds));
    Matrix w(static_cast<Eigen::Index>(t0), dw);
    for (auto& v : s.reshaped()) v = rng.normal();
    for (std::size_t t = 0; t < t0; ++t) {
      Vector x = Vector::Zero(b.cols());
      for (std::size_t j = 0; j <= lag && j <= t; ++j)
        x.segment(static_cast<Eigen::Index>(j * ds), static_cast<Eigen::Index>(ds)) =
            s.row(static_cast<Eigen::Index>(t - j)).transpose();
      Vector wt = b * x;
      wt.array() += c;
      for (auto& v : wt) v += rng.normal(0.0, noise);
      w.row(static_cast<Eigen::Index>(t)) = wt.transpose();
    }
    d.s.push_back(s);
    d.w.push_back(w);
  }
  return d;
}

HistoricalDataset iid_pairs(std::size_t n, const std::function<double(double)>& f, double noise, std::uint64_t seed) {
  Rng rng(seed);
  HistoricalDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform();
    d.s.push_back(Matrix::Constant(1, 1, s));
    d.w.push_back(Matrix::Constant(1, 1, f(s) + rng.normal(0.0, noise)));
  }
  return d;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    den += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return num / den;
}

}  // namespace

TEST_CASE("linear AR recovers a noiseless model exactly") {
  Matrix b(2, 6);
  b << 0.3, -0.2, 0.1, 0.05, -0.4, 0.2,
       -0.1, 0.5, 0.0, 0.3, 0.2, -0.3;
  const auto data = linear_data(5, 40, 2, b, 0.7, 0.0, 1);
  const Imputer imp = fit_linear_ar(data, 2, 0.0);
  const auto& p = imp.linear_ar_params();
  CHECK((p.coefficients - b).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((p.intercept.array() - 0.7).abs().maxCoeff() <= 1e-8);
  CHECK(p.residual_sd.maxCoeff() <= 1e-8);
  CHECK(imp.coefficient_stack().size() == 3 * 2 * 2);

  const auto zero = linear_data(3, 20, 1, Matrix::Zero(1, 2), 0.0, 0.0, 2);
  const Imputer z = fit_linear_ar(zero, 1, 0.0);
  CHECK(z.linear_ar_params().coefficients.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(z.linear_ar_params().residual_sd(0) <= 1e-12);
}

TEST_CASE("linear AR errors") {
  const auto data = linear_data(2, 3, 1, Matrix::Ones(1, 1), 0.0, 0.1, 3);
  CHECK_THROWS_AS(fit_linear_ar(data, 3, 0.0), InputError);
  HistoricalDataset flat;
  flat.s.push_back(Matrix::Zero(10, 1));
  flat.w.push_back(Matrix::Ones(10, 1));
  CHECK_THROWS_AS(fit_linear_ar(flat, 0, 0.0), FitError);
  CHECK_NOTHROW(fit_linear_ar(flat, 0, 1e-6));
  HistoricalDataset ragged = data;
  ragged.s.push_back(Matrix::Zero(2, 1));
  ragged.w.push_back(Matrix::Zero(2, 1));
  CHECK_THROWS_AS(fit_linear_ar(ragged, 0, 0.0), InputError);
  CHECK_THROWS_AS(fit_linear_ar(HistoricalDataset{}, 0, 0.0), InputError);
}

TEST_CASE("linear AR estimation error scales as 1/(N T0)") {
  const std::vector<std::size_t> ns = {250, 1000, 4000};
  const Matrix beta = Matrix::Constant(1, 1, 0.8);
  std::vector<double> x, y;
  for (std::size_t n : ns) {
    double mse = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const auto data = linear_data(n, 100, 1, beta, 0.0, 1.0, 1000 * n + rep);
      const Imputer imp = fit_linear_ar(data, 0, 0.0, false);
      mse += std::pow(imp.linear_ar_params().coefficients(0, 0) - 0.8, 2);
    }
    x.push_back(static_cast<double>(n * 100));
    y.push_back(mse / 50.0);
  }
  const double s = slope(x, y);
  MESSAGE("linear AR log-log slope " << s);
  CHECK(s == doctest::Approx(-1.0).epsilon(0.2));
}

TEST_CASE("kernel estimator basics") {
  const auto constant = iid_pairs(200, [](double) { return 1.7; }, 0.0, 4);
  const Imputer k = fit_kernel(constant, 0.1);
  for (double s : {0.05, 0.3, 0.77, 0.99}) CHECK(k.kernel_predict(scalar(s))(0) == doctest::Approx(1.7));

  HistoricalDataset one;
  one.s.push_back(Matrix::Constant(1, 1, 0.4));
  one.w.push_back(Matrix::Constant(1, 1, -2.5));
  const Imputer single = fit_kernel(one, 0.2);
  CHECK(single.kernel_predict(scalar(0.45))(0) == -2.5);
  CHECK(single.empty_window_count() == 0);
  CHECK(single.kernel_predict(scalar(0.9))(0) == -2.5);  // global-mean fallback
  CHECK(single.empty_window_count() == 1);

  CHECK_THROWS_AS(fit_kernel(one, 0.0), InputError);
  CHECK_THROWS_AS(fit_kernel(one, -1.0), InputError);
}

TEST_CASE("kernel estimator in two dimensions matches brute force") {
  Rng rng(21);
  HistoricalDataset d;
  for (int i = 0; i < 500; ++i) {
    Matrix s(1, 2);
    s << rng.uniform(), rng.uniform();
    d.s.push_back(s);
    d.w.push_back(Matrix::Constant(1, 1, rng.normal()));
  }
  const Imputer k = fit_kernel(d, 0.2);
  for (int q = 0; q < 50; ++q) {
    Vector s(2);
    s << rng.uniform(), rng.uniform();
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < 500; ++i) {
      if ((d.s[i].row(0).transpose() - s).cwiseAbs().maxCoeff() <= 0.1) {
        sum += d.w[i](0, 0);
        ++count;
      }
    }
    if (count > 0) CHECK(k.kernel_predict(s)(0) == doctest::Approx(sum / count).epsilon(1e-12));
  }
}

TEST_CASE("kernel estimation error scales as N^{-1/3}") {
  const auto f = [](double s) { return std::abs(s - 0.5); };
  std::vector<double> x, y;
  for (std::size_t n : {500u, 2000u, 8000u, 32000u}) {
    double err = 0.0;
    const int reps = 20, queries = 200;
    for (int rep = 0; rep < reps; ++rep) {
      const auto data = iid_pairs(n, f, 0.5, 77 * n + rep);
      const Imputer k = fit_kernel(data, default_kernel_bandwidth(n, 1.0, 1));
      Rng q(rep);
      for (int i = 0; i < queries; ++i) {
        const double s = q.uniform();
        err += std::abs(k.kernel_predict(scalar(s))(0) - f(s));
      }
    }
    x.push_back(static_cast<double>(n));
    y.push_back(err / (reps * queries));
  }
  const double s = slope(x, y);
  MESSAGE("kernel log-log slope " << s);
  CHECK(std::abs(s + 1.0 / 3.0) <= 0.15);
}

TEST_CASE("expected features: analytic linear AR") {
  LinearArParams p;
  p.lag = 0;
  p.coefficients = Matrix::Constant(1, 1, -0.14);
  p.intercept = scalar(0.5);
  p.residual_sd = scalar(0.1);
  const Imputer imp = Imputer::linear_ar(p, 1);
  const FeatureMap map = FeatureMap::synthetic_interaction();
  const std::vector<Vector> history = {scalar(0.4)};
  Rng rng(1);
  const double mu = 0.5 - 0.14 * 0.4;
  for (std::size_t arm : {0u, 1u}) {
    const auto out = expected_features(imp, map, history, arm, rng);
    const double a = arm == 0 ? -1.0 : 1.0;
    CHECK(out.analytic);
    CHECK(out.phi(0) == 1.0);
    CHECK(out.phi(1) == 0.4);
    CHECK(out.phi(2) == doctest::Approx(mu).epsilon(1e-15));
    CHECK(out.phi(3) == 0.4 * a);
  }
}

TEST_CASE("expected features: null imputer and full observer") {
  const FeatureMap map = FeatureMap::synthetic_interaction();
  const Imputer null = Imputer::null_imputer(1, 1);
  const std::vector<Vector> history = {scalar(0.9), scalar(-0.3)};
  Rng rng(2);
  const auto out = expected_features(null, map, history, 1, rng);
  CHECK(out.phi == map.phi(map.assemble(scalar(-0.3), scalar(0.0)), scalar(-0.3), 1));
  const Imputer full = Imputer::full_observer(1, 1);
  CHECK_THROWS_AS(expected_features(full, map, history, 0, rng), UsageError);
  CHECK_THROWS_AS(expected_features(null, map, std::vector<Vector>{}, 0, rng), InputError);
}

TEST_CASE("analytic and Monte-Carlo paths agree") {
  LinearArParams p;
  p.lag = 1;
  p.coefficients = (Matrix(1, 2) << 0.3, -0.2).finished();
  p.intercept = scalar(0.5);
  p.residual_sd = scalar(0.7);
  Imputer imp = Imputer::linear_ar(p, 1);
  const FeatureMap map = FeatureMap::synthetic_interaction();
  const std::vector<Vector> history = {scalar(1.1), scalar(-0.6)};
  Rng rng(3);
  const auto analytic = expected_features(imp, map, history, 1, rng);
  imp.set_analytic(false);
  imp.set_mc_samples(100000);
  const auto mc = expected_features(imp, map, history, 1, rng);
  CHECK_FALSE(mc.analytic);
  CHECK(mc.samples == 100000);
  // Only the W coordinate is random; its sd is the residual sd.
  const double tol = 3.0 * 0.7 / std::sqrt(1e5);
  CHECK((mc.phi - analytic.phi).cwiseAbs().maxCoeff() <= tol);
  CHECK(mc.std_error(2) == doctest::Approx(0.7 / std::sqrt(1e5)).epsilon(0.05));

  const Matrix all = expected_feature_matrix(imp, map, history, rng);
  CHECK(all.rows() == 2);
  CHECK((all.row(1).transpose() - analytic.phi).cwiseAbs().maxCoeff() <= tol);
}

TEST_CASE("oracle imputer reproduces the environment law") {
  SyntheticEnv env(SyntheticEnvConfig{}, 5);
  const Imputer oracle = Imputer::oracle(env.true_law(), 1, 1);
  std::vector<Vector> history = env.presample_history();
  for (int t = 0; t < 30; ++t) {
    history.push_back(env.step().observed);
    CHECK(oracle.mean(history)(0) == synthetic_w_mean(SyntheticEnvConfig{}, history));
  }
  CHECK_THROWS_AS(save_imputer(oracle, temp_file("oracle.txt").string()), UsageError);
}

TEST_CASE("historical sampler") {
  const EnvironmentFactory factory = [](std::uint64_t seed) {
    return std::make_unique<SyntheticEnv>(SyntheticEnvConfig{}, seed);
  };
  const auto data = sample_historical(factory, 4, 25, 9);
  CHECK(data.trajectories() == 4);
  CHECK(data.length() == 25);
  CHECK(data.env_id == "synthetic_linear");
  CHECK_NOTHROW(data.validate());
  const auto again = sample_historical(factory, 4, 25, 9);
  CHECK(again.w[3] == data.w[3]);
  CHECK(data.s[0] != data.s[1]);
}

TEST_CASE("persistence round trips") {
  Matrix b(1, 3);
  b << 0.123456789012345678, -1.0 / 3.0, 2.0 / 7.0;
  const auto data = linear_data(10, 30, 1, b, 0.25, 0.3, 6);
  Imputer ar = fit_linear_ar(data, 2, 1e-9);
  ar.set_mc_samples(17);
  const auto path = temp_file("ar.txt").string();
  save_imputer(ar, path);
  const Imputer back = load_imputer(path);
  CHECK(back.kind() == ImputerKind::LinearAR);
  CHECK(back.coefficient_stack() == ar.coefficient_stack());
  CHECK(back.linear_ar_params().intercept == ar.linear_ar_params().intercept);
  CHECK(back.linear_ar_params().residual_sd == ar.linear_ar_params().residual_sd);
  CHECK(back.mc_samples() == 17);

  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto cut = text.find("residual_sd");
  {
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, cut);
  }
  try {
    load_imputer(path);
    FAIL("truncated file loaded");
  } catch (const LoadError& e) {
    CHECK(e.field() == "residual_sd");
  }
  {
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, text.size() - 4);
  }
  try {
    load_imputer(path);
    FAIL("truncated file loaded");
  } catch (const LoadError& e) {
    CHECK(e.field() == "end");
  }
  {
    std::string v2 = text;
    v2.replace(v2.find("format_version: 1"), 17, "format_version: 2");
    std::ofstream out(path, std::ios::trunc);
    out << v2;
  }
  try {
    load_imputer(path);
    FAIL("wrong version loaded");
  } catch (const LoadError& e) {
    CHECK(e.field() == "format_version");
  }
  std::filesystem::remove(path);
}

TEST_CASE("kernel persistence preserves predictions") {
  const auto data = iid_pairs(10000, [](double s) { return std::sin(6.0 * s); }, 0.2, 8);
  const Imputer k = fit_kernel(data, 0.05);
  const auto path = temp_file("kernel.txt").string();
  save_imputer(k, path);
  const Imputer back = load_imputer(path);
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const Vector s = scalar(rng.uniform(-0.1, 1.1));
    CHECK(back.kernel_predict(s) == k.kernel_predict(s));
  }
  CHECK(back.kernel_params().residual_sd == k.kernel_params().residual_sd);
  std::filesystem::remove(path);

  const Imputer null = Imputer::null_imputer(2, 3);
  save_imputer(null, path);
  const Imputer nb = load_imputer(path);
  CHECK(nb.kind() == ImputerKind::Null);
  CHECK(nb.missing_dim() == 3);
  std::filesystem::remove(path);
}
