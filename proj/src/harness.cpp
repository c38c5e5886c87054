#include "pulse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "pulse/agents.hpp"
#include "pulse/error.hpp"
#include "pulse/stats.hpp"

namespace pulse {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kRewardWindow = 100;

LowerBoundEnvConfig lower_bound_config(const ExperimentConfig& config) {
  const LowerBoundSpec& s = config.environment.lower_bound;
  LowerBoundEnvConfig c;
  c.lin_dim = s.lin_dim;
  c.non_dim = s.non_dim;
  c.horizon = s.horizon ? s.horizon : config.experiment.horizon;
  c.theta_signs = s.theta_signs;
  const auto bump = std::make_shared<BumpFunction>(
      BumpFunction::make(s.non_dim, s.bins_per_dim, s.beta, s.lipschitz, s.fill_fraction, s.sign_seed));
  c.f = [bump](const Vector& o) { return (*bump)(o); };
  c.f_name = "bump";
  c.reward_sd = s.reward_sd;
  c.w_noise_sd = s.w_noise_sd;
  return c;
}

std::shared_ptr<const ConditionalLaw> environment_law(const ExperimentConfig& config) {
  return make_environment(config, 0)->true_law();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw InputError("percentile of an empty sample");
  const double rank = std::ceil(p / 100.0 * static_cast<double>(v.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(v.size()))) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

FILE* open_output(const fs::path& path) {
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  return f;
}

void close_output(FILE* f, const fs::path& path) {
  const bool bad = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || bad) throw IoError(path.string() + ": write failed");
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path.string() + ": write failed");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir + ": cannot create directory: " + ec.message());
}

Json imputer_summary(const Imputer& imp) {
  Json j{{"kind", to_string(imp.kind())},
         {"obs_dim", imp.obs_dim()},
         {"missing_dim", imp.missing_dim()},
         {"mc_samples", imp.mc_samples()},
         {"analytic", imp.analytic()},
         {"sd_mode", imp.sd_mode() == SdMode::Unit ? "unit" : "estimated"}};
  if (imp.kind() == ImputerKind::LinearAR) {
    const auto& p = imp.linear_ar_params();
    j["lag"] = p.lag;
    j["coefficients"] = imp.coefficient_stack();
    j["intercept"] = std::vector<double>(p.intercept.data(), p.intercept.data() + p.intercept.size());
    j["residual_sd"] = std::vector<double>(p.residual_sd.data(), p.residual_sd.data() + p.residual_sd.size());
  } else if (imp.kind() == ImputerKind::Kernel) {
    const auto& p = imp.kernel_params();
    j["bandwidth"] = p.bandwidth;
    j["beta"] = p.beta;
    j["pairs"] = p.train_s.rows();
  }
  return j;
}

void configure(Imputer& imp, const ImputerSpec& spec) {
  imp.set_mc_samples(spec.mc_samples);
  imp.set_analytic(spec.analytic);
  imp.set_sd_mode(spec.sd_mode);
}

}  // namespace

std::unique_ptr<Environment> make_environment(const ExperimentConfig& config, std::uint64_t seed) {
  switch (config.environment.kind) {
    case EnvKind::Synthetic:
      return std::make_unique<SyntheticEnv>(config.environment.synthetic, seed);
    case EnvKind::LowerBound:
      return std::make_unique<LowerBoundEnv>(lower_bound_config(config), seed);
    case EnvKind::Replay:
      break;
  }
  throw UsageError("replay logs are not step environments; use the replay runner");
}

EnvironmentFactory environment_factory(const ExperimentConfig& config) {
  return [config](std::uint64_t seed) { return make_environment(config, seed); };
}

double environment_reward_sd(const ExperimentConfig& config) {
  switch (config.environment.kind) {
    case EnvKind::Synthetic: return config.environment.synthetic.eta_sd;
    case EnvKind::LowerBound: return config.environment.lower_bound.reward_sd;
    case EnvKind::Replay: return 0.5;
  }
  return 0.0;
}

NormBound resolve_feat_norm_bound(const ExperimentConfig& config) {
  if (config.gamma.feat_norm_bound) return {*config.gamma.feat_norm_bound, "config"};
  auto env = make_environment(config, derive_seed(config.experiment.base_seed, "norm-dry-run"));
  const FeatureMap& map = env->feature_map();
  std::vector<double> norms;
  norms.reserve(config.gamma.norm_dry_run_steps * map.arm_count());
  for (std::size_t i = 0; i < config.gamma.norm_dry_run_steps; ++i) {
    const EnvironmentStep st = env->step();
    const Matrix f = map.arm_feature_matrix(st.full_context, st.observed);
    for (Eigen::Index a = 0; a < f.rows(); ++a) norms.push_back(f.row(a).norm());
  }
  return {percentile(std::move(norms), config.gamma.norm_percentile), "empirical"};
}

Imputer fit_configured_imputer(const ExperimentConfig& config, const HistoricalDataset& data) {
  const ImputerSpec& spec = config.imputer;
  data.validate();
  const std::size_t ds = data.obs_dim(), dw = data.missing_dim();
  Imputer imp = Imputer::null_imputer(ds, dw);
  switch (spec.kind) {
    case ImputerKind::Null:
      break;
    case ImputerKind::FullObserver:
      imp = Imputer::full_observer(ds, dw);
      break;
    case ImputerKind::Oracle: {
      auto law = environment_law(config);
      if (!law) throw ConfigError("imputer.kind", "the environment exposes no conditional law");
      imp = Imputer::oracle(law, ds, dw);
      break;
    }
    case ImputerKind::LinearAR:
      imp = fit_linear_ar(data, spec.lag, spec.ridge_eps, spec.intercept);
      break;
    case ImputerKind::Kernel: {
      const std::size_t pairs = data.trajectories() * data.length();
      const double h = spec.bandwidth > 0 ? spec.bandwidth : default_kernel_bandwidth(pairs, spec.beta, ds);
      imp = fit_kernel(data, h, spec.beta);
      break;
    }
  }
  configure(imp, spec);
  return imp;
}

PretrainResult pretrain(const ExperimentConfig& config) {
  PretrainResult out;
  out.data = sample_historical(environment_factory(config), config.pretrain.trajectories, config.pretrain.length,
                               config.pretrain.seed);
  if (!config.imputer.load_path.empty()) {
    Imputer imp = load_imputer(config.imputer.load_path);
    if (imp.obs_dim() != out.data.obs_dim() || imp.missing_dim() != out.data.missing_dim())
      throw ConfigError("imputer.load_path", "stored imputer dimensions do not match the environment");
    out.imputer = std::make_shared<const Imputer>(std::move(imp));
    out.provenance = {{"source", "loaded"}, {"path", config.imputer.load_path}};
  } else {
    out.imputer = std::make_shared<const Imputer>(fit_configured_imputer(config, out.data));
    out.provenance = {{"source", "fitted"},
                      {"trajectories", config.pretrain.trajectories},
                      {"length", config.pretrain.length},
                      {"seed", config.pretrain.seed},
                      {"env_id", out.data.env_id}};
  }
  out.provenance["model"] = imputer_summary(*out.imputer);
  if (!config.pretrain.save_path.empty()) {
    if (out.imputer->kind() == ImputerKind::Oracle)
      throw ConfigError("pretrain.save_path", "the oracle imputer cannot be persisted");
    const fs::path parent = fs::path(config.pretrain.save_path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    save_imputer(*out.imputer, config.pretrain.save_path);
    out.provenance["saved_to"] = config.pretrain.save_path;
  }
  return out;
}

GammaConfig Experiment::gamma_for(const AgentSpec& agent, std::size_t dim) const {
  GammaConfig g;
  g.lambda = config.gamma.lambda;
  g.sigma_eta = sigma_eta;
  g.sigma_eps = config.gamma.sigma_eps;
  g.delta = config.gamma.delta;
  g.feat_norm_bound = feat_norm.value;
  g.dim = dim;
  g.dt_source = agent.kind == AgentKind::PulseUcb ? config.gamma.dt_source : DtSource::Zero;
  g.dt_constant = config.gamma.dt_constant;
  g.scale = config.gamma.scale;
  return g;
}

Experiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.environment.kind == EnvKind::Replay)
    throw UsageError("replay configurations run through the replay command");
  Experiment e;
  e.config = config;
  PretrainResult pre = pretrain(config);
  e.imputer = pre.imputer;
  e.pretrain_info = pre.provenance;
  e.feat_norm = resolve_feat_norm_bound(config);
  e.sigma_eta = config.gamma.sigma_eta.value_or(environment_reward_sd(config));

  const bool needs_plug_in = std::any_of(config.agents.begin(), config.agents.end(), [&](const AgentSpec& a) {
    return a.kind == AgentKind::PulseUcb && config.gamma.dt_source == DtSource::PlugIn;
  });
  if (needs_plug_in) {
    BandOptions opt;
    opt.alpha = config.calibration.alpha;
    opt.split_seed = config.calibration.split_seed;
    opt.bootstrap_draws = config.calibration.bootstrap_draws;
    opt.bandwidth = config.calibration.bandwidth;
    opt.fit_target = [config](const HistoricalDataset& d) { return fit_configured_imputer(config, d); };
    const BandEstimate band = estimate_dt_band(pre.data, Matrix(), opt);
    e.plug_in_dt = band.plug_in_dt();
    e.calibration_info = {{"dhat", band.dhat},
                          {"plug_in_dt", band.plug_in_dt()},
                          {"surrogate", true},
                          {"bandwidth", band.bandwidth},
                          {"modulus", band.modulus},
                          {"empty_points", band.empty_points}};
  }
  return e;
}

TrialResult run_trial(const Experiment& experiment, std::size_t trial_index) {
  const ExperimentConfig& cfg = experiment.config;
  TrialResult out;
  out.trial = trial_index;
  out.seed = trial_seed(cfg.experiment.base_seed, trial_index);

  auto env = make_environment(cfg, derive_seed(out.seed, "env"));
  const FeatureMap& map = env->feature_map();
  const Vector& theta_star = env->theta_star();
  const std::size_t dim = map.output_dim();
  const auto law = env->true_law();
  const Imputer& imputer = *experiment.imputer;
  Rng mc_rng(derive_seed(out.seed, "imputer-mc"));

  const std::size_t n_agents = cfg.agents.size();
  std::vector<Agent> agents;
  agents.reserve(n_agents);
  bool any_pulse = false, oracle_dt = false;
  for (const AgentSpec& spec : cfg.agents) {
    AgentConfig ac;
    ac.kind = spec.kind;
    ac.form = spec.form;
    ac.label = spec.label;
    ac.gamma = experiment.gamma_for(spec, dim);
    agents.emplace_back(ac, derive_seed(out.seed, "agent:" + spec.label));
    if (spec.kind == AgentKind::PulseUcb) {
      any_pulse = true;
      oracle_dt |= cfg.gamma.dt_source == DtSource::Oracle;
    }
  }
  if (oracle_dt && !law) throw ConfigError("gamma.dt_source", "environment exposes no conditional law");

  const std::size_t horizon = cfg.experiment.horizon;
  out.records.reserve(horizon * n_agents);
  out.agents.assign(n_agents, {});
  std::vector<double> cum(n_agents, 0.0), cond_cum(n_agents, 0.0);
  std::vector<std::vector<double>> window(n_agents, std::vector<double>(kRewardWindow, 0.0));
  std::vector<double> window_sum(n_agents, 0.0);

  std::vector<Vector> history = env->presample_history();
  history.reserve(history.size() + horizon);
  const Vector zero_w = Vector::Zero(static_cast<Eigen::Index>(map.missing_dim()));

  for (std::size_t t = 1; t <= horizon; ++t) {
    const EnvironmentStep step = env->step();
    history.push_back(step.observed);

    Matrix imputed, observed_only, full;
    std::optional<double> dt;
    if (any_pulse) {
      imputed = expected_feature_matrix(imputer, map, history, mc_rng);
      if (oracle_dt) {
        const auto truth = law->conditional(history);
        auto model = imputer.conditional(history);
        for (std::size_t j = 0; j < model.size(); ++j)
          if (model[j].sd <= 0.0) model[j].sd = truth[j].sd;
        dt = gaussian_dt(truth, model);
      } else if (cfg.gamma.dt_source == DtSource::PlugIn) {
        dt = experiment.plug_in_dt;
      } else if (cfg.gamma.dt_source == DtSource::Constant) {
        dt = cfg.gamma.dt_constant;
      }
      if (dt) out.dt_sum += *dt;
    }

    for (std::size_t i = 0; i < n_agents; ++i) {
      Agent& agent = agents[i];
      const Matrix* view = nullptr;
      switch (agent.kind()) {
        case AgentKind::PulseUcb:
          view = &imputed;
          break;
        case AgentKind::OfulObserved:
          if (observed_only.size() == 0)
            observed_only = map.arm_feature_matrix(map.assemble(step.observed, zero_w), step.observed);
          view = &observed_only;
          break;
        default:
          if (full.size() == 0) full = map.arm_feature_matrix(step.full_context, step.observed);
          view = &full;
          break;
      }
      AgentTrialSummary& summary = out.agents[i];
      if (agent.kind() == AgentKind::PulseUcb) {
        ++summary.ball_checks;
        if (!agent.theta_in_ball(theta_star)) ++summary.ball_misses;
      }
      const std::size_t arm = agent.select(*view, step.optimal_arm);
      const double reward = step.potential_rewards(static_cast<Eigen::Index>(arm));
      const double inst = step.optimal_mean - step.mean_rewards(static_cast<Eigen::Index>(arm));
      cum[i] += inst;
      const std::size_t slot = (t - 1) % kRewardWindow;
      window_sum[i] += reward - window[i][slot];
      window[i][slot] = reward;
      agent.observe(view->row(static_cast<Eigen::Index>(arm)).transpose(), reward,
                    agent.kind() == AgentKind::PulseUcb ? dt : std::nullopt);
      out.max_abs_reward = std::max(out.max_abs_reward, std::abs(reward));

      RegretRecord rec;
      rec.trial = trial_index;
      rec.t = t;
      rec.agent = i;
      rec.arm = arm;
      rec.reward = reward;
      rec.inst_regret = inst;
      rec.cum_regret = cum[i];
      rec.ma_reward = window_sum[i] / static_cast<double>(std::min(t, kRewardWindow));
      out.records.push_back(rec);

      if (cfg.experiment.conditional_regret && step.conditional_mean_rewards) {
        const Vector& c = *step.conditional_mean_rewards;
        const double ci = c.maxCoeff() - c(static_cast<Eigen::Index>(arm));
        cond_cum[i] += ci;
        out.conditional.push_back({trial_index, t, i, ci, cond_cum[i]});
      }
    }
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    out.agents[i].final_cum_regret = cum[i];
    out.agents[i].final_conditional_regret = cond_cum[i];
    if (agents[i].kind() == AgentKind::PulseUcb) {
      ++out.agents[i].ball_checks;
      if (!agents[i].theta_in_ball(theta_star)) ++out.agents[i].ball_misses;
    }
  }
  return out;
}

std::vector<AggregateRow> aggregate(std::span<const TrialResult> trials) {
  if (trials.empty()) return {};
  std::vector<const TrialResult*> sorted;
  for (const auto& tr : trials) sorted.push_back(&tr);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->trial < b->trial; });
  const std::size_t n_rec = sorted.front()->records.size();
  for (auto* tr : sorted)
    if (tr->records.size() != n_rec) throw InputError("aggregate: trials have different record counts");

  std::vector<AggregateRow> rows;
  rows.reserve(n_rec);
  std::vector<double> cum(sorted.size()), ma(sorted.size());
  for (std::size_t r = 0; r < n_rec; ++r) {
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      cum[k] = sorted[k]->records[r].cum_regret;
      ma[k] = sorted[k]->records[r].ma_reward;
    }
    const SampleSummary sc = summarize(cum), sm = summarize(ma);
    const RegretRecord& ref = sorted.front()->records[r];
    rows.push_back({ref.agent, ref.t, sc.mean, sc.std_error, sm.mean, sm.std_error});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return a.agent != b.agent ? a.agent < b.agent : a.t < b.t;
  });
  return rows;
}

std::vector<double> ExperimentResult::final_regret(std::size_t agent) const {
  std::vector<double> out;
  for (const auto& tr : trials) out.push_back(tr.agents.at(agent).final_cum_regret);
  return out;
}

std::vector<double> ExperimentResult::final_conditional_regret(std::size_t agent) const {
  std::vector<double> out;
  for (const auto& tr : trials) out.push_back(tr.agents.at(agent).final_conditional_regret);
  return out;
}

ExperimentResult run_experiment(const Experiment& experiment, const RunOptions& options) {
  const ExperimentConfig& cfg = experiment.config;
  const std::size_t n = cfg.experiment.trials;
  std::size_t threads = cfg.experiment.threads ? cfg.experiment.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, n);

  ExperimentResult result;
  result.trials.resize(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        result.trials[i] = run_trial(experiment, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
      if (!options.quiet) std::fprintf(stderr, "trial %zu/%zu done\n", i + 1, n);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  result.rows = aggregate(result.trials);

  double max_abs = 0.0;
  std::vector<std::uint64_t> seeds;
  for (const auto& tr : result.trials) {
    max_abs = std::max(max_abs, tr.max_abs_reward);
    seeds.push_back(tr.seed);
  }
  Json agents = Json::array();
  for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
    const std::vector<double> fin = result.final_regret(i);
    const SampleSummary s = summarize(fin);
    Json a{{"label", cfg.agents[i].label},
           {"kind", to_string(cfg.agents[i].kind)},
           {"mean_final_cum_regret", s.mean},
           {"se_final_cum_regret", s.std_error}};
    if (cfg.agents[i].kind == AgentKind::PulseUcb) {
      std::size_t covered = 0;
      for (const auto& tr : result.trials) covered += tr.agents[i].ball_misses == 0;
      a["ball_coverage_all_t"] = static_cast<double>(covered) / static_cast<double>(n);
    }
    agents.push_back(a);
  }
  bool conditional = false;
  for (const auto& tr : result.trials) conditional |= !tr.conditional.empty();

  Json meta{{"config_hash", cfg.hash()},
            {"base_seed", cfg.experiment.base_seed},
            {"trial_seeds", seeds},
            {"seed_derivation", "trial_seed(base_seed, i); sub-streams env, imputer-mc, agent:<label>"},
            {"gamma_scale", cfg.gamma.scale},
            {"feat_norm_bound", {{"value", experiment.feat_norm.value}, {"source", experiment.feat_norm.source}}},
            {"sigma_eta", experiment.sigma_eta},
            {"max_abs_reward", max_abs},
            {"imputer", experiment.pretrain_info},
            {"regret_flavor", "realized_mean"},
            {"conditional_regret_recorded", conditional},
            {"overrides", options.overrides},
            {"agents", agents}};
  if (experiment.plug_in_dt) meta["plug_in_dt"] = experiment.calibration_info;
  result.metadata = cfg.to_json();
  result.metadata["metadata"] = meta;
  return result;
}

void write_experiment(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir) {
  ensure_dir(dir);
  const fs::path root(dir);
  {
    const fs::path p = root / "raw.csv";
    FILE* f = open_output(p);
    std::fputs("trial,t,agent,arm,reward,inst_regret,cum_regret,ma_reward_100\n", f);
    for (const auto& tr : result.trials)
      for (const auto& r : tr.records)
        std::fprintf(f, "%zu,%zu,%s,%zu,%.17g,%.17g,%.17g,%.17g\n", r.trial, r.t, config.agents[r.agent].label.c_str(),
                     r.arm, r.reward, r.inst_regret, r.cum_regret, r.ma_reward);
    close_output(f, p);
  }
  {
    const fs::path p = root / "aggregate.csv";
    FILE* f = open_output(p);
    std::fputs("agent,t,mean_cum_regret,se_cum_regret,mean_ma_reward,se_ma_reward\n", f);
    for (const auto& r : result.rows)
      std::fprintf(f, "%s,%zu,%.17g,%.17g,%.17g,%.17g\n", config.agents[r.agent].label.c_str(), r.t,
                   r.mean_cum_regret, r.se_cum_regret, r.mean_ma_reward, r.se_ma_reward);
    close_output(f, p);
  }
  bool conditional = false;
  for (const auto& tr : result.trials) conditional |= !tr.conditional.empty();
  if (conditional) {
    const fs::path p = root / "conditional_regret.csv";
    FILE* f = open_output(p);
    std::fputs("trial,t,agent,inst_regret,cum_regret\n", f);
    for (const auto& tr : result.trials)
      for (const auto& r : tr.conditional)
        std::fprintf(f, "%zu,%zu,%s,%.17g,%.17g\n", r.trial, r.t, config.agents[r.agent].label.c_str(),
                     r.inst_regret, r.cum_regret);
    close_output(f, p);
  }
  write_json(result.metadata, root / "metadata.json");
}

// ---------------------------------------------------------------------------
// Replay

std::vector<double> ReplayResult::final_ctr(std::size_t agent) const {
  std::vector<double> out;
  for (const auto& c : curves)
    if (c.agent == agent) out.push_back(c.cum_ctr.empty() ? 0.0 : c.cum_ctr.back());
  return out;
}

ReplayLog load_or_generate_log(const ExperimentConfig& config) {
  if (!config.replay.log_path.empty()) return ReplayLog::load_csv(config.replay.log_path);
  return generate_replay_log(config.replay.generate);
}

ReplayResult run_replay(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.environment.kind != EnvKind::Replay)
    throw UsageError("the replay runner needs environment.kind = replay");
  const ReplayLog log = load_or_generate_log(config);
  const std::size_t n = log.size();
  const auto n_pre = static_cast<std::size_t>(std::floor(config.replay.pretrain_fraction * static_cast<double>(n)));
  if (n_pre < 1 || n - n_pre <= config.replay.k)
    throw ConfigError("replay.pretrain_fraction", "leaves no pretraining rows or fewer online rows than k");
  const ReplayLog pre = log.slice(0, n_pre);
  const ReplayLog online = log.slice(n_pre, n);

  const std::size_t ds = log.obs_dim();
  const std::size_t dw = log.has_full() ? log.full_dim() - ds : 0;
  bool any_pulse = false;
  for (const auto& a : config.agents) {
    any_pulse |= a.kind == AgentKind::PulseUcb;
    if ((a.kind == AgentKind::PulseUcb || a.kind == AgentKind::OfulFull) && dw == 0)
      throw ConfigError("agents", to_string(a.kind) + " needs a log with missing-feature columns");
  }
  const std::size_t dim = ds + dw;

  // Rows are exchangeable, so every pretraining row is a length-one trajectory.
  Json imputer_info;
  std::vector<Vector> imputed_w(online.size());
  if (any_pulse) {
    HistoricalDataset data;
    data.env_id = "replay";
    for (const auto& r : pre.rows()) {
      data.s.push_back(r.observed.transpose());
      data.w.push_back(r.full.tail(static_cast<Eigen::Index>(dw)).transpose());
    }
    ExperimentConfig fit_cfg = config;
    fit_cfg.imputer.lag = 0;
    const Imputer imp = config.imputer.load_path.empty() ? fit_configured_imputer(fit_cfg, data)
                                                         : load_imputer(config.imputer.load_path);
    for (std::size_t i = 0; i < online.size(); ++i) {
      const Vector& s = online.rows()[i].observed;
      imputed_w[i] = imp.mean(std::span<const Vector>(&s, 1));
    }
    imputer_info = imputer_summary(imp);
    imputer_info["source"] = config.imputer.load_path.empty() ? "fitted" : "loaded";
    imputer_info["pretrain_rows"] = n_pre;
  }

  auto view_row = [&](AgentKind kind, std::size_t row) {
    const ReplayRow& r = online.rows()[row];
    Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
    x.head(static_cast<Eigen::Index>(ds)) = r.observed;
    if (dw == 0) return x;
    if (kind == AgentKind::PulseUcb) x.tail(static_cast<Eigen::Index>(dw)) = imputed_w[row];
    else if (kind != AgentKind::OfulObserved) x.tail(static_cast<Eigen::Index>(dw)) = r.full.tail(static_cast<Eigen::Index>(dw));
    return x;
  };

  NormBound bound;
  if (config.gamma.feat_norm_bound) {
    bound = {*config.gamma.feat_norm_bound, "config"};
  } else {
    std::vector<double> norms;
    for (std::size_t i = 0; i < online.size(); ++i) norms.push_back(view_row(AgentKind::OfulFull, i).norm());
    bound = {percentile(std::move(norms), config.gamma.norm_percentile), "empirical"};
  }
  Experiment shared;
  shared.config = config;
  shared.feat_norm = bound;
  shared.sigma_eta = config.gamma.sigma_eta.value_or(environment_reward_sd(config));

  ReplayResult result;
  result.pretrain_rows = n_pre;
  result.base_rate = online.base_rate();
  const std::size_t k = config.replay.k;
  const std::size_t n_agents = config.agents.size();
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < config.replay.seeds; ++s) {
    const std::uint64_t seed = trial_seed(config.experiment.base_seed, s);
    seeds.push_back(seed);
    ReplayStream stream(online, k, derive_seed(seed, "replay-stream"));
    result.rounds = stream.rounds();
    std::vector<Agent> agents;
    for (const auto& spec : config.agents) {
      AgentConfig ac;
      ac.kind = spec.kind;
      ac.form = spec.form;
      ac.label = spec.label;
      ac.gamma = shared.gamma_for(spec, dim);
      agents.emplace_back(ac, derive_seed(seed, "agent:" + spec.label));
    }
    std::vector<ReplayCurve> curves(n_agents);
    std::vector<double> clicks(n_agents, 0.0);
    for (std::size_t i = 0; i < n_agents; ++i) {
      curves[i] = {s, i, {}};
      curves[i].cum_ctr.reserve(stream.rounds());
    }
    Matrix f(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    while (auto draw = stream.next()) {
      for (std::size_t i = 0; i < n_agents; ++i) {
        for (std::size_t c = 0; c < k; ++c)
          f.row(static_cast<Eigen::Index>(c)) = view_row(agents[i].kind(), draw->candidates[c]).transpose();
        const std::size_t choice = agents[i].select(f);
        const int reward = draw->reveal(choice);
        const std::optional<double> dt =
            config.gamma.dt_source == DtSource::Constant ? std::optional<double>(config.gamma.dt_constant) : std::nullopt;
        agents[i].observe(f.row(static_cast<Eigen::Index>(choice)).transpose(), reward, dt);
        clicks[i] += reward;
        curves[i].cum_ctr.push_back(clicks[i] / static_cast<double>(curves[i].cum_ctr.size() + 1));
      }
    }
    for (auto& c : curves) result.curves.push_back(std::move(c));
    if (!options.quiet) std::fprintf(stderr, "replay seed %zu/%zu done\n", s + 1, config.replay.seeds);
  }

  Json agents = Json::array();
  for (std::size_t i = 0; i < n_agents; ++i) {
    const SampleSummary s = summarize(result.final_ctr(i));
    agents.push_back({{"label", config.agents[i].label}, {"mean_final_ctr", s.mean}, {"se_final_ctr", s.std_error}});
  }
  Json meta{{"config_hash", config.hash()},
            {"base_seed", config.experiment.base_seed},
            {"seeds", seeds},
            {"log_source", config.replay.log_path.empty() ? "generated" : config.replay.log_path},
            {"log_rows", n},
            {"pretrain_rows", n_pre},
            {"rounds", result.rounds},
            {"base_rate", result.base_rate},
            {"feat_norm_bound", {{"value", bound.value}, {"source", bound.source}}},
            {"sigma_eta", shared.sigma_eta},
            {"imputer", imputer_info},
            {"overrides", options.overrides},
            {"agents", agents}};
  result.metadata = config.to_json();
  result.metadata["metadata"] = meta;
  return result;
}

void write_replay(const ReplayResult& result, const ExperimentConfig& config, const std::string& dir) {
  ensure_dir(dir);
  const fs::path root(dir);
  {
    const fs::path p = root / "replay_ctr.csv";
    FILE* f = open_output(p);
    std::fputs("seed,round,agent,cum_ctr\n", f);
    for (const auto& c : result.curves)
      for (std::size_t r = 0; r < c.cum_ctr.size(); ++r)
        std::fprintf(f, "%zu,%zu,%s,%.17g\n", c.seed_index, r + 1, config.agents[c.agent].label.c_str(), c.cum_ctr[r]);
    close_output(f, p);
  }
  {
    const fs::path p = root / "replay_aggregate.csv";
    FILE* f = open_output(p);
    std::fputs("agent,round,mean_cum_ctr,se_cum_ctr\n", f);
    for (std::size_t a = 0; a < config.agents.size(); ++a) {
      std::vector<const ReplayCurve*> mine;
      for (const auto& c : result.curves)
        if (c.agent == a) mine.push_back(&c);
      std::vector<double> v(mine.size());
      for (std::size_t r = 0; r < result.rounds; ++r) {
        for (std::size_t s = 0; s < mine.size(); ++s) v[s] = mine[s]->cum_ctr[r];
        const SampleSummary sm = summarize(v);
        std::fprintf(f, "%s,%zu,%.17g,%.17g\n", config.agents[a].label.c_str(), r + 1, sm.mean, sm.std_error);
      }
    }
    close_output(f, p);
  }
  write_json(result.metadata, root / "metadata.json");
}

}  // namespace pulse
