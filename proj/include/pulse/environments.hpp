#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulse/conditional.hpp"
#include "pulse/features.hpp"
#include "pulse/rng.hpp"

namespace pulse {

/// One round: full context, its observed part, per-arm potential rewards
/// sharing a single η_t draw, and the full-information optimal arm.
struct EnvironmentStep {
  std::size_t t = 0;
  Vector full_context;
  Vector observed;
  Vector mean_rewards;       ///< θ*ᵀΦ(Y_t, a)
  Vector potential_rewards;  ///< mean_rewards + η_t
  std::size_t optimal_arm = 0;
  double optimal_mean = 0.0;
  double eta = 0.0;
  /// θ*ᵀE[Φ(Y_t, a) | S_{1:t}] when the environment knows its conditional law.
  std::optional<Vector> conditional_mean_rewards;
};

/// Fills means, rewards and the argmax (ties toward the lower index).
EnvironmentStep make_step(std::size_t t, const FeatureMap& map, const Vector& theta_star,
                          Vector full_context, Vector observed, double eta);

/// Abstract context/reward generator. Contexts never depend on actions.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual EnvironmentStep step() = 0;
  virtual const FeatureMap& feature_map() const = 0;
  virtual const Vector& theta_star() const = 0;
  virtual std::string id() const = 0;
  /// Observed values preceding t = 1 (oldest first), available to every agent.
  virtual std::vector<Vector> presample_history() const { return {}; }
  /// True law of W_t | S_{1:t}, if the environment can state it.
  virtual std::shared_ptr<const ConditionalLaw> true_law() const { return nullptr; }
};

// ---------------------------------------------------------------------------
// ARMA(2,2)-driven synthetic environment

enum class WModel { Linear, Nonlinear };

struct SyntheticEnvConfig {
  double ar1 = 0.75;
  double ar2 = -0.25;
  double ma1 = 0.65;
  double ma2 = 0.35;
  double innovation_sd = 0.1;
  WModel w_model = WModel::Linear;
  double rho = 4.0;
  Vector beta_star = (Vector(2) << 0.50, -0.14).finished();
  Vector theta_star = (Vector(4) << 0.65, 1.52, -0.23, -0.23).finished();
  double xi_sd = 0.1;
  double eta_sd = 0.05;
  std::size_t lag_window = 3;
  std::size_t burn_in = 50;

  /// Throws ParameterError on inconsistent sizes or negative sds.
  void validate() const;
};

/// Smallest modulus among the roots of 1 − ar1 z − ar2 z²; > 1 iff stationary.
double ar_min_root_modulus(double ar1, double ar2);

/// Lag-1 autocorrelation of the stationary ARMA(2,2) process (closed form).
double arma_lag1_autocorrelation(const SyntheticEnvConfig& config);

/// x_{t,2}: mean of the last `lag_window` observed values, zero-padded.
double synthetic_lag_mean(const SyntheticEnvConfig& config, std::span<const Vector> history);

/// E[W_t | S_{1:t}] under the configured W model.
double synthetic_w_mean(const SyntheticEnvConfig& config, std::span<const Vector> history);

class SyntheticLaw final : public ConditionalLaw {
 public:
  explicit SyntheticLaw(SyntheticEnvConfig config) : config_(std::move(config)) {}
  std::vector<GaussianConditional> conditional(std::span<const Vector> history) const override;

 private:
  SyntheticEnvConfig config_;
};

class SyntheticEnv final : public Environment {
 public:
  SyntheticEnv(SyntheticEnvConfig config, std::uint64_t seed);

  /// Restores the zero state, reseeds and applies the burn-in.
  void reset(std::uint64_t seed);

  EnvironmentStep step() override;
  const FeatureMap& feature_map() const override { return map_; }
  const Vector& theta_star() const override { return config_.theta_star; }
  std::string id() const override;
  std::vector<Vector> presample_history() const override;
  std::shared_ptr<const ConditionalLaw> true_law() const override { return law_; }

  const SyntheticEnvConfig& config() const { return config_; }

 private:
  double advance_arma();

  SyntheticEnvConfig config_;
  FeatureMap map_;
  std::shared_ptr<const SyntheticLaw> law_;
  Rng context_rng_;
  Rng eta_rng_;
  double s_lag1_ = 0.0, s_lag2_ = 0.0;
  double e_lag1_ = 0.0, e_lag2_ = 0.0;
  std::vector<Vector> window_;  // last lag_window observed values
  std::vector<Vector> presample_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Two-regime lower-bound construction

/// Sum of disjoint bumps ω_j M^{−β} C_φ φ_β(2M(o − b_j)) on the first m
/// bins of a regular M^{d} partition of [0,1]^d, with C_φ = L / (β 2^β) and
/// φ_β(u) = (1 − ‖u‖∞)^β on the unit sup-ball.
struct BumpFunction {
  std::size_t dim = 1;
  std::size_t bins_per_dim = 4;
  double beta = 1.0;
  double lipschitz = 1.0;
  std::vector<int> omega;  ///< signs, one per active bin (m = omega.size())

  static BumpFunction make(std::size_t dim, std::size_t bins_per_dim, double beta, double lipschitz,
                           double fill_fraction, std::uint64_t sign_seed);
  double operator()(const Vector& o) const;
};

using RegressionFn = std::function<double(const Vector&)>;

struct LowerBoundEnvConfig {
  std::size_t lin_dim = 2;
  std::size_t non_dim = 1;
  std::size_t horizon = 1000;    ///< sets |θ_Q,i| = sqrt(lin_dim / horizon)
  std::vector<int> theta_signs;  ///< empty: all +1
  RegressionFn f;                ///< E[W | S] = f(O); must vanish at the anchor
  std::string f_name = "bump";
  double reward_sd = 0.1;
  double w_noise_sd = 0.0;
  Vector anchor;  ///< o₀ outside [−1,1]^{non_dim}; defaults to (2, …, 2)

  void validate() const;
};

class LowerBoundEnv final : public Environment {
 public:
  LowerBoundEnv(LowerBoundEnvConfig config, std::uint64_t seed);

  EnvironmentStep step() override;
  /// Same as step() with the latent branch V_t forced to `branch` ∈ {0, 1}.
  EnvironmentStep step_with_branch(int branch);

  const FeatureMap& feature_map() const override { return map_; }
  const Vector& theta_star() const override { return theta_; }
  std::string id() const override { return "lower_bound"; }
  std::shared_ptr<const ConditionalLaw> true_law() const override { return law_; }

  int last_branch() const { return last_branch_; }
  const LowerBoundEnvConfig& config() const { return config_; }

 private:
  EnvironmentStep draw(int branch);

  LowerBoundEnvConfig config_;
  FeatureMap map_;
  Vector theta_;
  std::shared_ptr<const ConditionalLaw> law_;
  Rng context_rng_;
  Rng eta_rng_;
  std::size_t t_ = 0;
  int last_branch_ = -1;
};

// ---------------------------------------------------------------------------
// Logged-data replay

struct ReplayRow {
  std::int64_t row_id = 0;
  std::int64_t pool_id = 0;
  int reward = 0;
  Vector observed;
  Vector full;  ///< empty when the log carries no full features
};

class ReplayLog {
 public:
  ReplayLog() = default;
  ReplayLog(std::vector<ReplayRow> rows);

  /// CSV with header `row_id,pool_id,reward,s_0..[,y_0..]`.
  static ReplayLog load_csv(const std::string& path);
  void save_csv(const std::string& path) const;

  const std::vector<ReplayRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t full_dim() const { return full_dim_; }
  bool has_full() const { return full_dim_ > 0; }
  double base_rate() const;

  /// Rows [first, last) as a new log.
  ReplayLog slice(std::size_t first, std::size_t last) const;

 private:
  std::vector<ReplayRow> rows_;
  std::size_t obs_dim_ = 0;
  std::size_t full_dim_ = 0;
};

struct ReplayLogSpec {
  std::size_t rows = 5000;
  std::size_t obs_dim = 4;
  std::size_t missing_dim = 4;
  std::size_t pools = 50;
  double base_logit = -1.5;
  double missing_weight = 2.0;
  double observed_weight = 0.5;
  double missing_noise_sd = 0.3;
  std::uint64_t seed = 1;
};

/// Synthetic click log: missing features are a noisy linear function of the
/// observed ones and drive most of the click probability.
ReplayLog generate_replay_log(const ReplayLogSpec& spec);

/// One round of replay: k candidate rows and the logged reward of a choice.
struct ReplayDraw {
  std::size_t round = 0;
  std::vector<std::size_t> candidates;  ///< row indices into the log
  const ReplayLog* log = nullptr;

  /// Logged click of the chosen candidate (index into `candidates`).
  int reveal(std::size_t choice) const;
};

/// Candidate sampler over a replay log. Each round draws k distinct rows
/// uniformly from the whole log; a log of n rows yields n − k rounds, after
/// which next() signals end of stream with std::nullopt.
class ReplayStream {
 public:
  ReplayStream(const ReplayLog& log, std::size_t k, std::uint64_t seed);
  std::optional<ReplayDraw> next();
  std::size_t cursor() const { return cursor_; }
  std::size_t rounds() const { return rounds_; }

 private:
  const ReplayLog* log_;
  std::size_t k_;
  std::size_t rounds_;
  std::size_t cursor_ = 0;
  Rng rng_;
  std::vector<std::size_t> scratch_;
};

}  // namespace pulse
