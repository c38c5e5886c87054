#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

namespace pulse {

enum class DtSource { Oracle, PlugIn, Constant, Zero };
enum class AgentKind { PulseUcb, OfulObserved, OfulFull, OracleBest, UniformRandom };
enum class SelectionForm { ClosedForm, BallMaximization };

std::string to_string(DtSource s);
std::string to_string(AgentKind k);
std::string to_string(SelectionForm f);
DtSource dt_source_from_string(const std::string& s);
AgentKind agent_kind_from_string(const std::string& s);
SelectionForm selection_form_from_string(const std::string& s);

struct GammaConfig {
  double lambda = 1.0;
  double sigma_eta = 0.05;
  /// Bound on the imputation-induced noise; the main-text constant is 2.
  double sigma_eps = 2.0;
  double delta = 0.05;
  double feat_norm_bound = 1.0;
  std::size_t dim = 1;
  DtSource dt_source = DtSource::Zero;
  double dt_constant = 0.0;
  /// Multiplies γ_t; 1 reproduces the theoretical radius.
  double scale = 1.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// γ_t = scale · (γ_t⁽⁰⁾ + 3 d² Σ_{τ≤t} D_τ) with
/// γ_t⁽⁰⁾ = 3λ + 6(σ_η + σ_ε)² [ln 4 + 2 ln t − ln δ + d ln(1 + tB²/(dλ))].
class GammaSchedule {
 public:
  explicit GammaSchedule(GammaConfig config);

  /// γ_t⁽⁰⁾ for t ≥ 1; t = 0 maps to γ₁⁽⁰⁾, the radius used for BALL₀.
  double gamma0(std::size_t t) const;
  /// γ_t using the imputation mass recorded so far.
  double gamma_at(std::size_t t) const;
  double alpha_at(std::size_t t) const;

  /// Adds D_t according to the source policy. Oracle and PlugIn need a value;
  /// Constant adds its constant and Zero ignores the argument.
  void record(std::optional<double> dt);
  double dt_cumsum() const { return dt_cumsum_; }
  const GammaConfig& config() const { return config_; }

 private:
  GammaConfig config_;
  double dt_cumsum_ = 0.0;
};

struct AgentConfig {
  AgentKind kind = AgentKind::PulseUcb;
  SelectionForm form = SelectionForm::ClosedForm;
  GammaConfig gamma;
  std::string label;  ///< name used in output; defaults to the kind
};

/// One decision policy. UCB agents select with γ_{t−1}, where t − 1 is the
/// number of completed updates; ties go to the lowest arm index.
class Agent {
 public:
  Agent(AgentConfig config, std::uint64_t seed);

  /// `oracle_arm` is consumed only by OracleBest, which requires it.
  std::size_t select(const Matrix& arm_features, std::optional<std::size_t> oracle_arm = std::nullopt);
  void observe(const Vector& chosen_features, double reward, std::optional<double> dt = std::nullopt);

  /// θ̂ᵀφ_a + √γ ‖φ_a‖_{Σ⁻¹} for every row.
  Vector ucb_scores(const Matrix& arm_features) const;
  /// max over BALL of θᵀφ_a, evaluated at θ̂ + √γ Σ⁻¹φ/‖φ‖_{Σ⁻¹}.
  Vector ball_scores(const Matrix& arm_features) const;

  /// (θ̂ − θ)ᵀ Σ (θ̂ − θ) ≤ γ_t for the current t.
  bool theta_in_ball(const Vector& theta) const;

  double current_gamma() const;
  AgentKind kind() const { return config_.kind; }
  const std::string& label() const { return config_.label; }
  const RidgeState& ridge() const { return ridge_; }
  const GammaSchedule& schedule() const { return schedule_; }
  bool uses_ucb() const;

 private:
  void check_features(const Matrix& arm_features) const;

  AgentConfig config_;
  RidgeState ridge_;
  GammaSchedule schedule_;
  Rng rng_;
};

}  // namespace pulse
