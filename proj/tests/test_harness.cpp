#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pulse/error.hpp"
#include "pulse/harness.hpp"
#include "pulse/stats.hpp"

using namespace pulse;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(std::vector<AgentSpec> agents, std::size_t horizon = 200, std::size_t trials = 3) {
  ExperimentConfig c;
  c.experiment.horizon = horizon;
  c.experiment.trials = trials;
  c.experiment.threads = 1;
  c.pretrain.trajectories = 50;
  c.pretrain.length = 30;
  c.gamma.scale = 0.02;
  c.gamma.feat_norm_bound = 1.5;
  c.agents = std::move(agents);
  c.validate();
  return c;
}

AgentSpec spec(AgentKind k, std::string label = "") {
  return {k, label.empty() ? to_string(k) : label, SelectionForm::ClosedForm};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pulse_harness_" + name);
  fs::remove_all(p);
  return p;
}

// Stationary sd of the ARMA(2,2) context from its MA(∞) weights.
double arma_sd(const SyntheticEnvConfig& e) {
  std::vector<double> psi = {1.0, e.ar1 + e.ma1};
  psi.push_back(e.ar1 * psi[1] + e.ar2 * psi[0] + e.ma2);
  for (int j = 3; j < 400; ++j) psi.push_back(e.ar1 * psi[j - 1] + e.ar2 * psi[j - 2]);
  double v = 0.0;
  for (double p : psi) v += p * p;
  return e.innovation_sd * std::sqrt(v);
}

}  // namespace

TEST_CASE("oracle agent has zero regret") {
  const Experiment e = prepare_experiment(small_config({spec(AgentKind::OracleBest)}));
  const TrialResult r = run_trial(e, 0);
  REQUIRE(r.records.size() == 200);
  for (const auto& rec : r.records) {
    CHECK(rec.inst_regret == 0.0);
    CHECK(rec.cum_regret == 0.0);
  }
}

TEST_CASE("uniform random regret is half the mean arm gap") {
  auto c = small_config({spec(AgentKind::UniformRandom)}, 100000, 1);
  c.experiment.conditional_regret = false;
  const Experiment e = prepare_experiment(c);
  const TrialResult r = run_trial(e, 0);
  const auto& env = c.environment.synthetic;
  const double expected = std::abs(env.theta_star(3)) * arma_sd(env) * std::sqrt(2.0 / M_PI);
  // Batch means absorb the serial correlation of the context.
  std::vector<double> batches;
  for (std::size_t b = 0; b < 100; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) s += r.records[b * 1000 + i].inst_regret;
    batches.push_back(s / 1000.0);
  }
  const SampleSummary s = summarize(batches);
  MESSAGE("uniform regret " << s.mean << " vs " << expected << " (se " << s.std_error << ")");
  CHECK(std::abs(s.mean - expected) <= 3.0 * s.std_error);
}

TEST_CASE("records satisfy the regret identity and invariants") {
  const Experiment e = prepare_experiment(
      small_config({spec(AgentKind::PulseUcb), spec(AgentKind::OfulObserved), spec(AgentKind::UniformRandom)}, 500));
  const TrialResult r = run_trial(e, 1);
  std::vector<double> sum(3, 0.0), prev(3, 0.0);
  for (const auto& rec : r.records) {
    CHECK(rec.inst_regret >= 0.0);
    CHECK(rec.cum_regret >= prev[rec.agent]);
    sum[rec.agent] += rec.inst_regret;
    CHECK(std::abs(rec.cum_regret - sum[rec.agent]) <= 1e-9 * static_cast<double>(rec.t));
    prev[rec.agent] = rec.cum_regret;
  }
  for (const auto& c : r.conditional) CHECK(c.inst_regret >= 0.0);
  CHECK(r.conditional.size() == r.records.size());
  CHECK(r.agents[0].ball_checks == 501);
}

TEST_CASE("common random numbers and labeled sub-streams") {
  const Experiment two = prepare_experiment(
      small_config({spec(AgentKind::OracleBest, "a"), spec(AgentKind::OracleBest, "b")}));
  const TrialResult r = run_trial(two, 0);
  for (std::size_t i = 0; i + 1 < r.records.size(); i += 2) {
    CHECK(r.records[i].reward == r.records[i + 1].reward);
    CHECK(r.records[i].arm == r.records[i + 1].arm);
  }

  // Adding an agent never perturbs another agent's stream.
  const Experiment solo = prepare_experiment(small_config({spec(AgentKind::PulseUcb)}));
  const Experiment pair =
      prepare_experiment(small_config({spec(AgentKind::PulseUcb), spec(AgentKind::UniformRandom)}));
  const TrialResult a = run_trial(solo, 2), b = run_trial(pair, 2);
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(a.records[t].arm == b.records[2 * t].arm);
    CHECK(a.records[t].reward == b.records[2 * t].reward);
  }
}

TEST_CASE("trials are deterministic and aggregation is order independent") {
  auto c = small_config({spec(AgentKind::PulseUcb), spec(AgentKind::OfulFull)}, 150, 4);
  const Experiment e = prepare_experiment(c);
  const TrialResult x = run_trial(e, 3), y = run_trial(e, 3);
  REQUIRE(x.records.size() == y.records.size());
  for (std::size_t i = 0; i < x.records.size(); ++i) {
    CHECK(x.records[i].reward == y.records[i].reward);
    CHECK(x.records[i].cum_regret == y.records[i].cum_regret);
  }

  const ExperimentResult serial = run_experiment(e);
  c.experiment.threads = 3;
  const ExperimentResult parallel = run_experiment(prepare_experiment(c));
  std::vector<TrialResult> reversed(serial.trials.rbegin(), serial.trials.rend());
  const auto rows = aggregate(reversed);
  REQUIRE(rows.size() == serial.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].mean_cum_regret == serial.rows[i].mean_cum_regret);
    CHECK(rows[i].se_cum_regret == serial.rows[i].se_cum_regret);
    CHECK(parallel.rows[i].mean_cum_regret == serial.rows[i].mean_cum_regret);
    CHECK(parallel.rows[i].se_ma_reward == serial.rows[i].se_ma_reward);
  }
}

TEST_CASE("one trial aggregates to itself") {
  const Experiment e = prepare_experiment(small_config({spec(AgentKind::OfulObserved)}, 100, 1));
  const ExperimentResult r = run_experiment(e);
  REQUIRE(r.rows.size() == 100);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].mean_cum_regret == r.trials[0].records[i].cum_regret);
    CHECK(r.rows[i].mean_ma_reward == r.trials[0].records[i].ma_reward);
    CHECK(r.rows[i].se_cum_regret == 0.0);
  }
}

TEST_CASE("moving-average reward uses a window of 100") {
  const Experiment e = prepare_experiment(small_config({spec(AgentKind::UniformRandom)}, 250, 1));
  const TrialResult r = run_trial(e, 0);
  double s = 0.0;
  for (std::size_t i = 150; i < 250; ++i) s += r.records[i].reward;
  CHECK(r.records[249].ma_reward == doctest::Approx(s / 100.0).epsilon(1e-12));
  CHECK(r.records[9].ma_reward ==
        doctest::Approx([&] { double a = 0; for (int i = 0; i < 10; ++i) a += r.records[i].reward; return a / 10; }()));
}

TEST_CASE("pretraining") {
  SUBCASE("held-out error of the AR imputer is near the noise floor") {
    ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
    c.pretrain.trajectories = 1000;
    c.pretrain.length = 100;
    c.imputer.lag = 2;
    const PretrainResult p = pretrain(c);
    auto env = make_environment(c, 12345);
    std::vector<Vector> hist = env->presample_history();
    double sse = 0.0;
    const int n = 5000;
    for (int t = 0; t < n; ++t) {
      const auto st = env->step();
      hist.push_back(st.observed);
      sse += std::pow(p.imputer->mean(hist)(0) - st.full_context(1), 2);
    }
    const double xi_var = std::pow(c.environment.synthetic.xi_sd, 2);
    MESSAGE("held-out MSE " << sse / n << " vs noise " << xi_var);
    CHECK(sse / n <= 2.0 * xi_var);
  }
  SUBCASE("minimal data fits") {
    ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
    c.pretrain.trajectories = 1;
    c.pretrain.length = 2;
    c.imputer.lag = 0;
    c.imputer.ridge_eps = 1e-9;
    CHECK_NOTHROW(pretrain(c));
  }
  SUBCASE("identical seeds give identical persisted imputers") {
    ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
    const fs::path dir = scratch("persist");
    c.pretrain.save_path = (dir / "a.txt").string();
    pretrain(c);
    c.pretrain.save_path = (dir / "b.txt").string();
    pretrain(c);
    CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
    c.pretrain.save_path.clear();
    c.imputer.load_path = (dir / "a.txt").string();
    const PretrainResult loaded = pretrain(c);
    CHECK(loaded.provenance["source"] == "loaded");
  }
  SUBCASE("kernel and oracle imputers") {
    ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
    c.imputer.kind = ImputerKind::Kernel;
    CHECK(pretrain(c).imputer->kind() == ImputerKind::Kernel);
    c.imputer.kind = ImputerKind::Oracle;
    const Experiment e = prepare_experiment(c);
    const TrialResult r = run_trial(e, 0);
    CHECK(r.dt_sum == 0.0);
  }
}

TEST_CASE("oracle D_t accumulates and plug-in D_t comes from the band") {
  ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
  c.imputer.kind = ImputerKind::Null;
  const Experiment e = prepare_experiment(c);
  CHECK(run_trial(e, 0).dt_sum > 0.0);

  c.imputer.kind = ImputerKind::LinearAR;
  c.imputer.lag = 0;
  c.environment.synthetic.lag_window = 1;
  c.gamma.dt_source = DtSource::PlugIn;
  c.calibration.bootstrap_draws = 50;
  const Experiment p = prepare_experiment(c);
  REQUIRE(p.plug_in_dt.has_value());
  CHECK(*p.plug_in_dt > 0.0);
  const TrialResult r = run_trial(p, 0);
  CHECK(r.dt_sum == doctest::Approx(*p.plug_in_dt * 200.0));
  CHECK(p.calibration_info["surrogate"].get<bool>());
}

TEST_CASE("lower-bound experiments run") {
  ExperimentConfig c = small_config({spec(AgentKind::PulseUcb), spec(AgentKind::OracleBest)}, 100, 2);
  c.environment.kind = EnvKind::LowerBound;
  c.environment.lower_bound.w_noise_sd = 0.1;
  c.imputer.kind = ImputerKind::Kernel;
  const ExperimentResult r = run_experiment(prepare_experiment(c));
  CHECK(r.final_regret(1) == std::vector<double>{0.0, 0.0});
  CHECK(r.final_regret(0)[0] >= 0.0);
}

TEST_CASE("empirical norm bound") {
  ExperimentConfig c = small_config({spec(AgentKind::PulseUcb)});
  c.gamma.feat_norm_bound.reset();
  c.gamma.norm_dry_run_steps = 2000;
  const NormBound b = resolve_feat_norm_bound(c);
  CHECK(b.source == "empirical");
  CHECK(b.value > 1.0);
  CHECK(resolve_feat_norm_bound(c).value == b.value);
  c.gamma.norm_percentile = 100.0;
  CHECK(resolve_feat_norm_bound(c).value >= b.value);
}

TEST_CASE("written outputs rerun bit-exactly from metadata") {
  auto c = small_config({spec(AgentKind::PulseUcb), spec(AgentKind::OfulObserved)}, 120, 2);
  const fs::path dir = scratch("outputs");
  const ExperimentResult r = run_experiment(prepare_experiment(c), {{"experiment.trials=2"}, true});
  write_experiment(r, c, dir.string());
  for (const char* f : {"raw.csv", "aggregate.csv", "conditional_regret.csv", "metadata.json"})
    CHECK(fs::exists(dir / f));
  const std::string raw = slurp(dir / "raw.csv");
  CHECK(raw.rfind("trial,t,agent,arm,reward,inst_regret,cum_regret,ma_reward_100\n", 0) == 0);
  CHECK(slurp(dir / "aggregate.csv").rfind("agent,t,mean_cum_regret,se_cum_regret,mean_ma_reward,se_ma_reward\n", 0) == 0);

  const Json meta = read_json_file((dir / "metadata.json").string());
  CHECK(meta["metadata"]["overrides"][0] == "experiment.trials=2");
  CHECK(meta["metadata"]["regret_flavor"] == "realized_mean");
  CHECK(meta["metadata"]["config_hash"] == c.hash());
  const ExperimentConfig again = ExperimentConfig::from_json(meta);
  const fs::path dir2 = scratch("outputs2");
  write_experiment(run_experiment(prepare_experiment(again)), again, dir2.string());
  CHECK(slurp(dir2 / "raw.csv") == raw);
}

namespace {

ExperimentConfig replay_config(std::vector<AgentSpec> agents) {
  ExperimentConfig c;
  c.environment.kind = EnvKind::Replay;
  c.gamma.dt_source = DtSource::Zero;
  c.replay.generate.rows = 1500;
  c.replay.seeds = 3;
  c.agents = std::move(agents);
  return c;
}

}  // namespace

TEST_CASE("replay: uniform agent matches the base rate") {
  const auto c = replay_config({spec(AgentKind::UniformRandom), spec(AgentKind::PulseUcb)});
  const ReplayResult r = run_replay(c);
  const SampleSummary s = summarize(r.final_ctr(0));
  const double se = std::sqrt(r.base_rate * (1 - r.base_rate) / (static_cast<double>(r.rounds) * 3));
  CHECK(std::abs(s.mean - r.base_rate) <= 4.0 * se);
  CHECK(r.rounds == 1500 - 300 - 20);
}

TEST_CASE("replay: a dominant row type drives a greedy agent to CTR one") {
  std::vector<ReplayRow> rows;
  for (int i = 0; i < 2000; ++i) {
    ReplayRow row;
    row.row_id = i;
    row.pool_id = 0;
    const bool good = i % 2 == 0;
    row.reward = good ? 1 : 0;
    row.observed = Vector::Constant(1, good ? 1.0 : 0.0);
    row.full = Vector::Constant(2, good ? 1.0 : 0.0);
    rows.push_back(row);
  }
  const fs::path dir = scratch("replay_log");
  fs::create_directories(dir);
  ReplayLog(rows).save_csv((dir / "log.csv").string());
  auto c = replay_config({spec(AgentKind::OfulObserved)});
  c.replay.log_path = (dir / "log.csv").string();
  c.gamma.scale = 1e-4;
  const ReplayResult r = run_replay(c);
  for (double ctr : r.final_ctr(0)) CHECK(ctr > 0.98);
}

TEST_CASE("replay is reproducible and writes its tables") {
  const auto c = replay_config({spec(AgentKind::PulseUcb), spec(AgentKind::OfulObserved), spec(AgentKind::OfulFull)});
  const fs::path a = scratch("replay_a"), b = scratch("replay_b");
  write_replay(run_replay(c), c, a.string());
  write_replay(run_replay(c), c, b.string());
  CHECK(slurp(a / "replay_ctr.csv") == slurp(b / "replay_ctr.csv"));
  CHECK(slurp(a / "replay_aggregate.csv") == slurp(b / "replay_aggregate.csv"));
  CHECK(slurp(a / "replay_ctr.csv").rfind("seed,round,agent,cum_ctr\n", 0) == 0);
}

TEST_CASE("runner preconditions") {
  auto c = small_config({spec(AgentKind::PulseUcb)});
  CHECK_THROWS_AS(run_replay(c), UsageError);
  auto r = replay_config({spec(AgentKind::PulseUcb)});
  CHECK_THROWS_AS(prepare_experiment(r), UsageError);
  r.replay.pretrain_fraction = 0.999;
  CHECK_THROWS_AS(run_replay(r), ConfigError);
}

TEST_CASE("paired one-sided t-test") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> y = {1.5, 2.4, 3.7, 4.3, 5.6};
  const PairedTest t = paired_t_less(x, y);
  // Differences −0.5, −0.4, −0.7, −0.3, −0.6: mean −0.5, sd √0.025.
  CHECK(t.mean_diff == doctest::Approx(-0.5));
  CHECK(t.t_stat == doctest::Approx(-0.5 / std::sqrt(0.025 / 5)));
  CHECK(t.p_value == doctest::Approx(0.0010553229).epsilon(1e-6));
  CHECK(paired_t_less(y, x).p_value == doctest::Approx(1.0 - t.p_value));
  CHECK(paired_t_less(x, x).p_value == 1.0);
  CHECK(ols_slope(std::vector<double>{0, 1, 2}, std::vector<double>{1, 3, 5}) == doctest::Approx(2.0));
}
