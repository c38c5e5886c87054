#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pulse/conditional.hpp"
#include "pulse/features.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

namespace pulse {

class Environment;

/// N trajectories of length T₀. Row t of s[i] is S_t and row t of w[i] is W_t.
struct HistoricalDataset {
  std::vector<Matrix> s;
  std::vector<Matrix> w;
  std::uint64_t seed = 0;
  std::string env_id;

  std::size_t trajectories() const { return s.size(); }
  std::size_t length() const { return s.empty() ? 0 : static_cast<std::size_t>(s.front().rows()); }
  std::size_t obs_dim() const { return s.empty() ? 0 : static_cast<std::size_t>(s.front().cols()); }
  std::size_t missing_dim() const { return w.empty() ? 0 : static_cast<std::size_t>(w.front().cols()); }

  /// Throws InputError unless N ≥ 1 and every trajectory shares T₀ and dims.
  void validate() const;

  /// Every (S, W) pair stacked row-wise; used by the kernel fit.
  std::pair<Matrix, Matrix> flattened() const;
};

/// Roll an environment forward for T₀ steps, N times, recording (S_t, W_t).
/// The environment is reset between trajectories by constructing it anew.
using EnvironmentFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;
HistoricalDataset sample_historical(const EnvironmentFactory& factory, std::size_t trajectories,
                                    std::size_t length, std::uint64_t seed);

enum class ImputerKind { Oracle, LinearAR, Kernel, Null, FullObserver };

std::string to_string(ImputerKind kind);
ImputerKind imputer_kind_from_string(const std::string& name);

/// How the sampling sd of a fitted imputer is chosen.
enum class SdMode { Estimated, Unit };

struct LinearArParams {
  std::size_t lag = 0;
  /// d_W × (m+1)·d_S; column block j multiplies S_{t−j}.
  Matrix coefficients;
  Vector intercept;
  /// Residual sd per missing coordinate.
  Vector residual_sd;
};

struct KernelParams {
  double bandwidth = 0.0;
  double beta = 1.0;
  Matrix train_s;
  Matrix train_w;
  Vector global_mean;
  Vector residual_sd;
};

/// Fitted model p̂(W_t | S_{1:t}). Immutable after construction apart from a
/// diagnostic counter of kernel queries that hit an empty window.
class Imputer final : public ConditionalLaw {
 public:
  static Imputer null_imputer(std::size_t obs_dim, std::size_t missing_dim);
  static Imputer full_observer(std::size_t obs_dim, std::size_t missing_dim);
  static Imputer oracle(std::shared_ptr<const ConditionalLaw> law, std::size_t obs_dim,
                        std::size_t missing_dim);
  static Imputer linear_ar(LinearArParams params, std::size_t obs_dim);
  static Imputer kernel(KernelParams params);

  ImputerKind kind() const { return kind_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t missing_dim() const { return missing_dim_; }

  std::size_t mc_samples() const { return mc_samples_; }
  void set_mc_samples(std::size_t n);
  bool analytic() const { return analytic_; }
  void set_analytic(bool a) { analytic_ = a; }
  SdMode sd_mode() const { return sd_mode_; }
  void set_sd_mode(SdMode m) { sd_mode_ = m; }

  const LinearArParams& linear_ar_params() const;
  const KernelParams& kernel_params() const;
  /// Flat coefficient stack b̂, W-coordinate major then lag then S-coordinate.
  std::vector<double> coefficient_stack() const;

  /// Per-coordinate Gaussian law of W_t. Null yields N(0, sd) with the
  /// imputer's point mass at zero (sd reported as 0).
  std::vector<GaussianConditional> conditional(std::span<const Vector> history) const override;
  Vector mean(std::span<const Vector> history) const;
  Vector sample(std::span<const Vector> history, Rng& rng) const;

  /// Nadaraya–Watson estimate at a single point (Kernel only).
  Vector kernel_predict(const Vector& s) const;

  std::size_t empty_window_count() const { return empty_windows_ ? empty_windows_->load() : 0; }

 private:
  Imputer() = default;
  Vector linear_mean(std::span<const Vector> history) const;
  double sampling_sd(std::size_t coord) const;

  ImputerKind kind_ = ImputerKind::Null;
  std::size_t obs_dim_ = 0;
  std::size_t missing_dim_ = 0;
  std::size_t mc_samples_ = 64;
  bool analytic_ = true;
  SdMode sd_mode_ = SdMode::Estimated;
  std::shared_ptr<const ConditionalLaw> law_;
  std::shared_ptr<const LinearArParams> ar_;
  std::shared_ptr<const KernelParams> kernel_;
  // Kernel training pairs ordered by the first S coordinate.
  std::shared_ptr<const std::vector<std::size_t>> order_;
  std::shared_ptr<const Vector> sorted_first_;
  std::shared_ptr<const Matrix> prefix_w_;
  std::shared_ptr<std::atomic<std::size_t>> empty_windows_;
};

/// OLS of W_t on (S_t, …, S_{t−m}) over t ∈ [m+1, T₀] of every trajectory.
Imputer fit_linear_ar(const HistoricalDataset& data, std::size_t lag, double ridge_eps,
                      bool intercept = true);

/// Box-kernel Nadaraya–Watson regression of W on S over all stacked pairs.
Imputer fit_kernel(const HistoricalDataset& data, double bandwidth, double beta = 1.0);

/// h = N^{−1/(2β+d_S)}.
double default_kernel_bandwidth(std::size_t n, double beta, std::size_t obs_dim);

struct ImputedFeatures {
  Vector phi;
  bool analytic = false;
  std::size_t samples = 0;
  /// Per-coordinate Monte-Carlo standard error (zero on the analytic path).
  Vector std_error;
};

/// φ̂_{t,a}: E over p̂(· | S_{1:t}) of Φ(Y, a).
ImputedFeatures expected_features(const Imputer& imputer, const FeatureMap& map,
                                  std::span<const Vector> history, std::size_t arm, Rng& rng);

/// All arms at once; Monte-Carlo draws are shared across arms. Row a is φ̂_{t,a}.
Matrix expected_feature_matrix(const Imputer& imputer, const FeatureMap& map,
                               std::span<const Vector> history, Rng& rng);

void save_imputer(const Imputer& imputer, const std::string& path);
Imputer load_imputer(const std::string& path);

}  // namespace pulse
