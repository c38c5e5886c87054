#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulse/calibration.hpp"
#include "pulse/config.hpp"
#include "pulse/environments.hpp"
#include "pulse/imputation.hpp"

namespace pulse {

std::unique_ptr<Environment> make_environment(const ExperimentConfig& config, std::uint64_t seed);
EnvironmentFactory environment_factory(const ExperimentConfig& config);

/// Reward-noise sd of the configured environment.
double environment_reward_sd(const ExperimentConfig& config);

struct NormBound {
  double value = 1.0;
  std::string source;  ///< "config" or "empirical"
};

/// B from the config, or the configured percentile of ‖Φ(Y_t, a)‖₂ over a dry run.
NormBound resolve_feat_norm_bound(const ExperimentConfig& config);

struct PretrainResult {
  HistoricalDataset data;
  std::shared_ptr<const Imputer> imputer;
  Json provenance;
};

/// Samples the historical dataset and fits (or loads) the configured imputer.
/// Persists the imputer when pretrain.save_path is set.
PretrainResult pretrain(const ExperimentConfig& config);

/// Fits the configured imputer kind on an arbitrary dataset.
Imputer fit_configured_imputer(const ExperimentConfig& config, const HistoricalDataset& data);

/// Everything shared by the trials of one experiment. Immutable once built.
struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const Imputer> imputer;
  NormBound feat_norm;
  double sigma_eta = 0.0;
  std::optional<double> plug_in_dt;
  Json pretrain_info;
  Json calibration_info;

  GammaConfig gamma_for(const AgentSpec& agent, std::size_t dim) const;
};

Experiment prepare_experiment(const ExperimentConfig& config);

struct RegretRecord {
  std::size_t trial = 0;
  std::size_t t = 0;
  std::size_t agent = 0;  ///< index into config.agents
  std::size_t arm = 0;
  double reward = 0.0;
  double inst_regret = 0.0;
  double cum_regret = 0.0;
  double ma_reward = 0.0;  ///< mean of the last min(t, 100) rewards
};

struct ConditionalRecord {
  std::size_t trial = 0;
  std::size_t t = 0;
  std::size_t agent = 0;
  double inst_regret = 0.0;
  double cum_regret = 0.0;
};

struct AgentTrialSummary {
  double final_cum_regret = 0.0;
  double final_conditional_regret = 0.0;
  /// Ball checks performed and how many excluded θ*. PULSE-UCB only.
  std::size_t ball_checks = 0;
  std::size_t ball_misses = 0;
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<RegretRecord> records;  ///< t-major, agents in config order
  std::vector<ConditionalRecord> conditional;
  std::vector<AgentTrialSummary> agents;
  double max_abs_reward = 0.0;
  double dt_sum = 0.0;  ///< Σ D_t fed to PULSE-UCB agents
};

TrialResult run_trial(const Experiment& experiment, std::size_t trial_index);

struct AggregateRow {
  std::size_t agent = 0;
  std::size_t t = 0;
  double mean_cum_regret = 0.0;
  double se_cum_regret = 0.0;
  double mean_ma_reward = 0.0;
  double se_ma_reward = 0.0;
};

/// Mean and standard error per (agent, t); the input order of trials is irrelevant.
std::vector<AggregateRow> aggregate(std::span<const TrialResult> trials);

struct ExperimentResult {
  std::vector<TrialResult> trials;  ///< sorted by trial index
  std::vector<AggregateRow> rows;
  Json metadata;

  /// Final cumulative regret of one agent, one entry per trial.
  std::vector<double> final_regret(std::size_t agent) const;
  std::vector<double> final_conditional_regret(std::size_t agent) const;
};

struct RunOptions {
  std::vector<std::string> overrides;  ///< echoed in metadata
  bool quiet = true;
};

/// Runs every trial (in parallel when threads ≠ 1) and builds the metadata.
ExperimentResult run_experiment(const Experiment& experiment, const RunOptions& options = {});

/// raw.csv, aggregate.csv, conditional_regret.csv (when recorded) and metadata.json.
void write_experiment(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir);

// ---------------------------------------------------------------------------
// Replay

struct ReplayCurve {
  std::size_t seed_index = 0;
  std::size_t agent = 0;
  std::vector<double> cum_ctr;  ///< clicks so far / rounds so far
};

struct ReplayResult {
  std::vector<ReplayCurve> curves;
  std::size_t rounds = 0;
  std::size_t pretrain_rows = 0;
  double base_rate = 0.0;
  Json metadata;

  /// Final cumulative CTR of one agent, one entry per seed.
  std::vector<double> final_ctr(std::size_t agent) const;
};

ReplayLog load_or_generate_log(const ExperimentConfig& config);
ReplayResult run_replay(const ExperimentConfig& config, const RunOptions& options = {});
/// replay_ctr.csv (per seed), replay_aggregate.csv and metadata.json.
void write_replay(const ReplayResult& result, const ExperimentConfig& config, const std::string& dir);

}  // namespace pulse
