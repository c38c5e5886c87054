// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 unless a criterion fails that is not listed in
// kDocumentedFailures; see the README for why those stay red.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pulse/agents.hpp"
#include "pulse/calibration.hpp"
#include "pulse/cli.hpp"
#include "pulse/environments.hpp"
#include "pulse/error.hpp"
#include "pulse/harness.hpp"
#include "pulse/imputation.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"
#include "pulse/stats.hpp"

using namespace pulse;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = std::string(PULSE_SOURCE_DIR) + "/configs/";

// Tolerances.
constexpr double kAlpha = 0.05;                 // one-sided paired tests (A1, A2)
constexpr double kA1RatioMax = 0.5;
constexpr double kA1SecondsMax = 120.0;
constexpr double kA3LinearSlope = -1.0, kA3LinearTol = 0.2;
constexpr double kA3KernelSlope = -1.0 / 3.0, kA3KernelTol = 0.15;
constexpr double kA3SecondsMax = 300.0;
constexpr double kA4CoverageMin = 0.88;
constexpr double kA5Tol = 1e-9;
constexpr double kA6LogDetTol = 1e-9;
constexpr double kA6SolveTol = 1e-8;
constexpr double kA7QuadTol = 1e-6;
constexpr double kA8Slack = 0.05;
constexpr double kA9Z99 = 2.5758293035489004;
constexpr double kA9Sigmas = 3.0;

const std::set<std::string> kDocumentedFailures = {"A1", "A2"};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t agent_index(const ExperimentConfig& c, AgentKind k) {
  for (std::size_t i = 0; i < c.agents.size(); ++i)
    if (c.agents[i].kind == k) return i;
  throw UsageError("config lacks agent " + to_string(k));
}

Vector random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return v;
}

// ---------------------------------------------------------------------------

Outcome a1_linear_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_config(kConfigs + "synthetic_linear.json");
  const ExperimentResult r = run_experiment(prepare_experiment(c));
  const double secs = seconds_since(t0);
  const auto pulse = r.final_regret(agent_index(c, AgentKind::PulseUcb));
  const auto obs = r.final_regret(agent_index(c, AgentKind::OfulObserved));
  const auto full = r.final_regret(agent_index(c, AgentKind::OfulFull));
  const double mp = summarize(pulse).mean, mo = summarize(obs).mean, mf = summarize(full).mean;
  const PairedTest full_vs_pulse = paired_t_less(full, pulse);
  const PairedTest pulse_vs_obs = paired_t_less(pulse, obs);
  const bool order = full_vs_pulse.p_value < kAlpha && pulse_vs_obs.p_value < kAlpha;
  const bool ratio = mp <= kA1RatioMax * mo;
  const bool fast = secs <= kA1SecondsMax;
  return {order && ratio && fast,
          fmt("full %.3f < pulse %.3f (p=%.2g) < observed %.3f (p=%.2g): %s; pulse/observed %.3f (max %.2f): %s; "
              "%.1fs",
              mf, mp, full_vs_pulse.p_value, mo, pulse_vs_obs.p_value, order ? "ok" : "no", mp / mo, kA1RatioMax,
              ratio ? "ok" : "no", secs)};
}

Outcome a2_rho_sweep() {
  const std::vector<std::string> names = {"synthetic_linear", "synthetic_nonlinear_rho0.1", "synthetic_nonlinear_rho1",
                                          "synthetic_nonlinear_rho10"};
  const std::vector<std::string> short_names = {"linear", "rho0.1", "rho1", "rho10"};
  std::vector<std::vector<double>> finals;
  for (const auto& n : names) {
    const ExperimentConfig c = load_config(kConfigs + n + ".json");
    finals.push_back(run_experiment(prepare_experiment(c)).final_regret(agent_index(c, AgentKind::PulseUcb)));
  }
  bool pass = true;
  std::string detail = fmt("%s %.3f", short_names[0].c_str(), summarize(finals[0]).mean);
  for (std::size_t k = 1; k < finals.size(); ++k) {
    const double prev = summarize(finals[k - 1]).mean, cur = summarize(finals[k]).mean;
    bool ok;
    double p;
    if (k == 1) {
      // Ties allowed: fail only on a significant decrease.
      p = paired_t_less(finals[k], finals[k - 1]).p_value;
      ok = cur >= prev || p >= kAlpha;
    } else {
      p = paired_t_less(finals[k - 1], finals[k]).p_value;
      ok = cur > prev && p < kAlpha;
    }
    pass = pass && ok;
    detail += fmt(" -> %s %.3f (p=%.2g %s)", short_names[k].c_str(), cur, p, ok ? "ok" : "no");
  }
  return {pass, detail};
}

Outcome a3_imputer_rates() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kReps = 50;

  // (i) Lag-2 AR on the linear synthetic environment, whose W is exactly
  // linear in (1, S_t, S_{t−1}, S_{t−2}).
  ExperimentConfig c = load_config(kConfigs + "synthetic_linear.json");
  const auto& env = c.environment.synthetic;
  const double b = env.beta_star(1) / 3.0;
  const std::size_t t_len = 100;
  std::vector<double> lx, ly;
  for (std::size_t n : {50u, 100u, 200u, 400u, 800u}) {
    double mse = 0.0;
    for (int rep = 0; rep < kReps; ++rep) {
      const HistoricalDataset d =
          sample_historical(environment_factory(c), n, t_len, trial_seed(derive_seed(31, "a3-linear"), n * 1000 + rep));
      const Imputer imp = fit_linear_ar(d, 2, 0.0, true);
      const auto& p = imp.linear_ar_params();
      double e = std::pow(p.intercept(0) - env.beta_star(0), 2);
      for (Eigen::Index j = 0; j < 3; ++j) e += std::pow(p.coefficients(0, j) - b, 2);
      mse += e;
    }
    lx.push_back(std::log(static_cast<double>(n * t_len)));
    ly.push_back(std::log(mse / kReps));
  }
  const double s_lin = ols_slope(lx, ly);

  // (ii) Box-kernel regression of a Lipschitz function on U[0,1].
  const auto f = [](double s) { return std::abs(s - 0.5); };
  std::vector<double> kx, ky;
  for (std::size_t n : {500u, 2000u, 8000u, 32000u}) {
    double err = 0.0;
    const int queries = 200;
    for (int rep = 0; rep < kReps; ++rep) {
      Rng rng(trial_seed(derive_seed(32, "a3-kernel"), n * 1000 + rep));
      HistoricalDataset d;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = rng.uniform();
        d.s.push_back(Matrix::Constant(1, 1, s));
        d.w.push_back(Matrix::Constant(1, 1, f(s) + rng.normal(0.0, 0.5)));
      }
      const Imputer k = fit_kernel(d, default_kernel_bandwidth(n, 1.0, 1), 1.0);
      for (int q = 0; q < queries; ++q) {
        const double s = rng.uniform();
        err += std::abs(k.kernel_predict(Vector::Constant(1, s))(0) - f(s));
      }
    }
    kx.push_back(std::log(static_cast<double>(n)));
    ky.push_back(std::log(err / (kReps * queries)));
  }
  const double s_ker = ols_slope(kx, ky);
  const double secs = seconds_since(t0);
  const bool ok_lin = std::abs(s_lin - kA3LinearSlope) <= kA3LinearTol;
  const bool ok_ker = std::abs(s_ker - kA3KernelSlope) <= kA3KernelTol;
  return {ok_lin && ok_ker && secs <= kA3SecondsMax,
          fmt("linear AR slope %.3f (target %.1f±%.1f), kernel slope %.3f (target %.3f±%.2f), %.1fs", s_lin,
              kA3LinearSlope, kA3LinearTol, s_ker, kA3KernelSlope, kA3KernelTol, secs)};
}

Outcome a4_ball_coverage() {
  const ExperimentConfig c = load_config(
      kConfigs + "synthetic_linear.json",
      {"gamma.dt_source=oracle", "gamma.delta=0.1", "gamma.scale=1.0", "experiment.horizon=500", "experiment.trials=200",
       "experiment.conditional_regret=false"});
  const ExperimentResult r = run_experiment(prepare_experiment(c));
  const std::size_t k = agent_index(c, AgentKind::PulseUcb);
  std::size_t covered = 0;
  for (const auto& tr : r.trials) covered += tr.agents[k].ball_misses == 0;
  const double freq = static_cast<double>(covered) / static_cast<double>(r.trials.size());
  return {freq >= kA4CoverageMin,
          fmt("theta* inside every ball t=0..500 in %zu/%zu trials (%.3f, min %.2f)", covered, r.trials.size(), freq,
              kA4CoverageMin)};
}

Outcome a5_selection_equivalence() {
  Rng rng(5005);
  std::size_t compared = 0, disagreements = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 10000; ++inst) {
    const std::size_t d = 1 + rng.index(8);
    AgentConfig ac;
    ac.kind = AgentKind::OfulFull;
    ac.gamma.dim = d;
    ac.gamma.lambda = 0.1 + 2.0 * rng.uniform();
    ac.gamma.scale = std::exp(rng.uniform(std::log(1e-3), std::log(1.0)));
    ac.form = SelectionForm::ClosedForm;
    Agent closed(ac, 1);
    ac.form = SelectionForm::BallMaximization;
    Agent ball(ac, 1);
    const std::size_t n = rng.index(30);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector x = random_vector(rng, d, 1.0 / std::sqrt(static_cast<double>(d)));
      const double y = rng.normal();
      closed.observe(x, y);
      ball.observe(x, y);
    }
    const std::size_t k = 2 + rng.index(9);
    Matrix arms(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    for (auto& v : arms.reshaped()) v = rng.normal();
    Vector u = closed.ucb_scores(arms);
    const Vector b = ball.ball_scores(arms);
    worst = std::max(worst, (u - b).cwiseAbs().maxCoeff());
    std::sort(u.data(), u.data() + u.size(), std::greater<>());
    if (u(0) - u(1) > kA5Tol) {
      ++compared;
      disagreements += closed.select(arms) != ball.select(arms);
    }
  }
  return {disagreements == 0 && worst <= kA5Tol,
          fmt("%zu/%zu separated instances agree, max |UCB - ball max| %.2e (tol %.0e)", compared - disagreements,
              compared, worst, kA5Tol)};
}

Outcome a6_linear_algebra() {
  Rng rng(6006);
  // Sylvester: each step's log-det increment equals ln(1 + xᵀΣ⁻¹x) from a dense oracle.
  const std::size_t d = 5;
  RidgeState s(d, 1.0);
  Matrix gram = Matrix::Identity(d, d);
  double worst_step = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vector x = random_vector(rng, d, 0.4);
    const double before = s.log_det();
    const double q = x.dot(gram.ldlt().solve(x));
    s.rank_one_update(x, rng.normal());
    gram += x * x.transpose();
    worst_step = std::max(worst_step, std::abs((s.log_det() - before) - std::log1p(q)));
  }
  // Incremental solve against a dense solve after the same 10⁴ updates.
  double worst_solve = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Vector v = random_vector(rng, d);
    const Vector dense = gram.ldlt().solve(v);
    worst_solve = std::max(worst_solve, (s.solve(v) - dense).cwiseAbs().maxCoeff() / (1.0 + dense.cwiseAbs().maxCoeff()));
    worst_solve = std::max(worst_solve, std::abs(s.quadratic_form_inv(v) - v.dot(dense)) / (1.0 + std::abs(v.dot(dense))));
  }
  // Potential bound on random sequences with ‖x‖ ≤ B.
  std::size_t violations = 0;
  for (std::uint64_t seq = 0; seq < 1000; ++seq) {
    Rng r(trial_seed(6007, seq));
    const std::size_t dim = 1 + r.index(6);
    const double bound = 0.5 + 2.0 * r.uniform();
    const double lambda = 0.2 + r.uniform();
    const std::size_t horizon = 200 + r.index(800);
    RidgeState st(dim, lambda);
    for (std::size_t t = 0; t < horizon; ++t) {
      Vector x = random_vector(r, dim);
      x *= bound * std::pow(r.uniform(), 0.25) / x.norm();
      st.rank_one_update(x, 0.0);
    }
    violations += !potential_bound_check(st, horizon, bound);
  }
  const bool ok = worst_step <= kA6LogDetTol && worst_solve <= kA6SolveTol && violations == 0;
  return {ok, fmt("max log-det step error %.2e (tol %.0e), max solve error %.2e (tol %.0e), potential-bound "
                  "violations %zu/1000",
                  worst_step, kA6LogDetTol, worst_solve, kA6SolveTol, violations)};
}

double normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
}

// Composite Simpson on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

Outcome a7_gaussian_dt() {
  Rng rng(7007);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mu = rng.normal(), mu_hat = rng.normal();
    const double sd = 0.3 + 2.0 * rng.uniform(), sd_hat = 0.3 + 2.0 * rng.uniform();
    const double lo = std::min(mu - 12 * sd, mu_hat - 12 * sd_hat), hi = std::max(mu + 12 * sd, mu_hat + 12 * sd_hat);
    // log p − log q written out so the integrand never divides tiny densities.
    const auto integrand = [&](double y) {
      const double lp = -0.5 * std::pow((y - mu) / sd, 2) - std::log(sd);
      const double lq = -0.5 * std::pow((y - mu_hat) / sd_hat, 2) - std::log(sd_hat);
      return normal_pdf(y, mu, sd) * (lp - lq);
    };
    const double quad = 0.5 * simpson(integrand, lo, hi, 20000);
    worst = std::max(worst, std::abs(gaussian_dt(GaussianConditional{mu, sd}, GaussianConditional{mu_hat, sd_hat}) - quad));
  }

  const auto sampler = [](double m, double s) -> LawSampler {
    return [m, s](Rng& r) { return Vector::Constant(1, r.normal(m, s)); };
  };
  const auto family = default_test_family(-4.0, 4.0, 41);
  int passed = 0;
  for (int i = 0; i < 100; ++i) {
    const double mu = rng.normal(), mu_hat = rng.normal();
    const double sd = 0.5 + rng.uniform(), sd_hat = 0.5 + rng.uniform();
    const double bound = std::sqrt(gaussian_dt(GaussianConditional{mu, sd}, GaussianConditional{mu_hat, sd_hat}));
    passed += tv_kl_check(sampler(mu, sd), sampler(mu_hat, sd_hat), family, bound, 20000, rng).passed;
  }
  // Planted negative control: a three-sd shift checked against a bound of 0.05.
  const auto planted = tv_kl_check(sampler(0.0, 1.0), sampler(3.0, 1.0), family, 0.05, 20000, rng);
  const bool ok = worst <= kA7QuadTol && passed == 100 && !planted.passed;
  return {ok, fmt("max |closed form - quadrature| %.2e (tol %.0e), Pinsker check passed %d/100, planted control %s",
                  worst, kA7QuadTol, passed, planted.passed ? "missed" : "flagged")};
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

Outcome a8_band() {
  constexpr double alpha = 0.1;
  const auto f = [](double s) { return 0.5 * std::sin(2.0 * M_PI * s); };
  int covered = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto data = iid_pairs(2000, f, 0.5, trial_seed(8008, rep));
    BandOptions opt;
    opt.alpha = alpha;
    opt.split_seed = static_cast<std::uint64_t>(rep);
    const BandEstimate est = estimate_dt_band(data, Matrix(), opt);
    double err = 0.0, radius = 0.0;
    for (Eigen::Index k = 0; k < est.grid.rows(); ++k) {
      if (est.window_counts[static_cast<std::size_t>(k)] < 2) continue;
      err = std::max(err, std::abs(f(est.grid(k, 0)) - est.centers(k, 0)));
      radius = std::max(radius, est.half_widths(k, 0));
    }
    covered += err <= radius;
  }
  const double coverage = static_cast<double>(covered) / reps;

  std::vector<double> mean_dhat;
  for (std::size_t n : {500u, 2000u, 8000u}) {
    double acc = 0.0;
    const int m = 20;
    for (int rep = 0; rep < m; ++rep) {
      const auto data = iid_pairs(n, [](double) { return 0.0; }, 0.3, trial_seed(8009, n * 100 + rep));
      BandOptions opt;
      opt.alpha = alpha;
      opt.split_seed = static_cast<std::uint64_t>(rep);
      opt.fit_target = [](const HistoricalDataset&) { return Imputer::null_imputer(1, 1); };
      acc += estimate_dt_band(data, Matrix(), opt).dhat;
    }
    mean_dhat.push_back(acc / m);
  }
  const bool monotone = mean_dhat[1] <= mean_dhat[0] && mean_dhat[2] <= mean_dhat[1];
  const bool ok = coverage >= 1.0 - alpha - kA8Slack && monotone;
  return {ok, fmt("coverage %d/%d = %.3f (min %.2f); mean dhat N=500/2000/8000: %.4f %.4f %.4f", covered, reps,
                  coverage, 1.0 - alpha - kA8Slack, mean_dhat[0], mean_dhat[1], mean_dhat[2])};
}

Outcome a9_lower_bound() {
  LowerBoundEnvConfig c;
  c.lin_dim = 2;
  c.non_dim = 1;
  c.horizon = 1000;
  c.w_noise_sd = 0.1;
  const auto bump = std::make_shared<BumpFunction>(BumpFunction::make(1, 4, 1.0, 1.0, 1.0, 9));
  c.f = [bump](const Vector& o) { return (*bump)(o); };
  LowerBoundEnv env(c, 9009);
  const Vector& theta = env.theta_star();
  const int n = 100000;
  int ones = 0;
  // Residuals of the realized mean rewards against the stated branch means.
  std::vector<double> r0_pos, r0_neg, r1_pos, r1_neg;
  for (int i = 0; i < n; ++i) {
    const EnvironmentStep st = env.step();
    const Vector q = st.observed.head(2);
    const Vector o = st.observed.tail(1);
    if (env.last_branch() == 1) {
      ++ones;
      const double lin = theta.head(2).dot(q);
      r1_pos.push_back(st.mean_rewards(1) - lin);
      r1_neg.push_back(st.mean_rewards(0) + lin);
    } else {
      r0_pos.push_back(st.mean_rewards(1) - 0.5 * (*bump)(o));
      r0_neg.push_back(st.mean_rewards(0));
    }
  }
  const double p = static_cast<double>(ones) / n;
  const double half_ci = kA9Z99 * std::sqrt(0.25 / n);
  bool ok = std::abs(p - 0.5) <= half_ci;
  std::string detail = fmt("P(V=1) %.4f (99%% CI half-width %.4f)", p, half_ci);
  const std::vector<std::pair<const char*, const std::vector<double>*>> checks = {
      {"V=0,a=+1", &r0_pos}, {"V=0,a=-1", &r0_neg}, {"V=1,a=+1", &r1_pos}, {"V=1,a=-1", &r1_neg}};
  for (const auto& [name, v] : checks) {
    const SampleSummary s = summarize(*v);
    const bool good = std::abs(s.mean) <= kA9Sigmas * s.std_error || (s.sd == 0.0 && s.mean == 0.0);
    ok = ok && good;
    detail += fmt("; %s residual %.2e (se %.1e)", name, s.mean, s.std_error);
  }
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pulse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome a10_determinism() {
  const fs::path root = fs::temp_directory_path() / "pulse_acceptance_a10";
  fs::remove_all(root);
  const std::vector<std::string> small = {"--trials", "3", "--set", "experiment.horizon=300", "--quiet"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), small.begin(), small.end());
    return a;
  };
  bool ok = true;
  std::string detail;
  for (const char* cfg : {"synthetic_linear", "synthetic_nonlinear_rho10", "lower_bound_dgp", "calibration_demo"}) {
    const fs::path first = root / cfg / "first", second = root / cfg / "second";
    const int c1 = cli(with({"simulate", "--config", kConfigs + cfg + ".json", "--out", first.string()}));
    const int c2 = cli({"simulate", "--config", (first / "metadata.json").string(), "--out", second.string(), "--quiet"});
    const bool same = c1 == 0 && c2 == 0 && slurp(first / "raw.csv") == slurp(second / "raw.csv") &&
                      !slurp(first / "raw.csv").empty();
    ok = ok && same;
    detail += fmt("%s%s %s", detail.empty() ? "" : "; ", cfg, same ? "bit-exact" : "DIFFERS");
  }
  const fs::path r1 = root / "replay1", r2 = root / "replay2";
  const std::vector<std::string> rs = {"--set", "replay.generate.rows=1500", "--quiet"};
  std::vector<std::string> a1 = {"replay", "--config", kConfigs + "replay_demo.json", "--out", r1.string()};
  std::vector<std::string> a2 = {"replay", "--config", kConfigs + "replay_demo.json", "--out", r2.string()};
  a1.insert(a1.end(), rs.begin(), rs.end());
  a2.insert(a2.end(), rs.begin(), rs.end());
  const bool replay_same = cli(a1) == 0 && cli(a2) == 0 &&
                           slurp(r1 / "replay_ctr.csv") == slurp(r2 / "replay_ctr.csv") &&
                           !slurp(r1 / "replay_ctr.csv").empty();
  ok = ok && replay_same;
  detail += fmt("; replay %s", replay_same ? "bit-exact" : "DIFFERS");
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", a1_linear_ordering}, {"A2", a2_rho_sweep},   {"A3", a3_imputer_rates},
      {"A4", a4_ball_coverage},   {"A5", a5_selection_equivalence}, {"A6", a6_linear_algebra},
      {"A7", a7_gaussian_dt},     {"A8", a8_band},        {"A9", a9_lower_bound},
      {"A10", a10_determinism}};
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);

  int unexpected = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool documented = !o.pass && kDocumentedFailures.count(id);
    std::printf("%-3s %s  %s%s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                documented ? "  [known failure, see README]" : "");
    std::fflush(stdout);
    if (!o.pass && !documented) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
