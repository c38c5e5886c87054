#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pulse/agents.hpp"
#include "pulse/environments.hpp"
#include "pulse/imputation.hpp"

namespace pulse {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class EnvKind { Synthetic, LowerBound, Replay };
std::string to_string(EnvKind k);

struct ExperimentSection {
  std::size_t horizon = 1000;
  std::size_t trials = 30;
  std::uint64_t base_seed = 1;
  std::size_t threads = 0;  ///< 0 uses the hardware concurrency
  bool conditional_regret = true;
};

struct LowerBoundSpec {
  std::size_t lin_dim = 2;
  std::size_t non_dim = 1;
  std::size_t horizon = 0;  ///< 0 follows experiment.horizon
  std::size_t bins_per_dim = 4;
  double beta = 1.0;
  double lipschitz = 1.0;
  double fill_fraction = 1.0;
  std::uint64_t sign_seed = 1;
  double reward_sd = 0.1;
  double w_noise_sd = 0.0;
  std::vector<int> theta_signs;
};

struct EnvironmentSpec {
  EnvKind kind = EnvKind::Synthetic;
  SyntheticEnvConfig synthetic;
  LowerBoundSpec lower_bound;
};

struct PretrainSpec {
  std::size_t trajectories = 1000;
  std::size_t length = 100;
  std::uint64_t seed = 7;
  std::string save_path;
};

struct ImputerSpec {
  ImputerKind kind = ImputerKind::LinearAR;
  std::size_t lag = 2;
  double ridge_eps = 1e-9;
  bool intercept = true;
  double bandwidth = 0.0;  ///< kernel; 0 selects N^{−1/(2β+d_S)}
  double beta = 1.0;
  std::size_t mc_samples = 64;
  bool analytic = true;
  SdMode sd_mode = SdMode::Estimated;
  std::string load_path;
};

struct AgentSpec {
  AgentKind kind = AgentKind::PulseUcb;
  std::string label;
  SelectionForm form = SelectionForm::ClosedForm;
};

struct GammaSpec {
  double lambda = 1.0;
  std::optional<double> sigma_eta;        ///< unset: the environment's reward noise sd
  double sigma_eps = 2.0;
  double delta = 0.05;
  std::optional<double> feat_norm_bound;  ///< unset: empirical percentile from a dry run
  double scale = 1.0;
  DtSource dt_source = DtSource::Oracle;
  double dt_constant = 0.0;
  std::size_t norm_dry_run_steps = 10000;
  double norm_percentile = 99.9;
};

struct CalibrationSpec {
  double alpha = 0.1;
  std::size_t bootstrap_draws = 200;
  std::uint64_t split_seed = 3;
  double bandwidth = 0.0;
};

struct ReplaySpec {
  std::string log_path;  ///< empty: generate a synthetic log
  ReplayLogSpec generate;
  std::size_t k = 20;
  double pretrain_fraction = 0.2;
  std::size_t seeds = 5;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name = "experiment";
  ExperimentSection experiment;
  EnvironmentSpec environment;
  PretrainSpec pretrain;
  ImputerSpec imputer;
  std::vector<AgentSpec> agents;
  GammaSpec gamma;
  CalibrationSpec calibration;
  ReplaySpec replay;
  std::string output_dir = "results";

  /// Strict: unknown keys and ill-typed values raise ConfigError naming the
  /// dotted path. A top-level "metadata" object is accepted and ignored.
  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// FNV-1a of the canonical resolved JSON, as 16 hex digits.
  std::string hash() const;
};

/// Default agent roster: PULSE-UCB, OFUL on observed features, OFUL-Full.
std::vector<AgentSpec> default_agents();

/// `key.path=value`; the value is parsed as JSON when possible, else taken as a string.
Json apply_overrides(Json j, const std::vector<std::string>& overrides);

Json read_json_file(const std::string& path);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace pulse
