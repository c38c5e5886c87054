#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace pulse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Regularized Gram matrix Σ = λI + Σ x xᵀ with its Cholesky factor, the
/// running log-determinant and the ridge estimate θ̂ = Σ⁻¹ Σ r x.
///
/// The factor is maintained by O(d²) rank-one updates. It is rebuilt from the
/// Gram matrix every `kRefactorInterval` updates or whenever a diagonal pivot
/// drops below `kPivotFloor * lambda`.
class RidgeState {
 public:
  static constexpr std::size_t kRefactorInterval = 512;
  static constexpr double kPivotFloor = 1e-12;

  /// Throws ParameterError for dim == 0 or lambda <= 0.
  RidgeState(std::size_t dim, double lambda);

  /// Σ ← Σ + x xᵀ, b ← b + r x, log det advanced by ln(1 + xᵀΣ⁻¹x) using
  /// the pre-update Σ, θ̂ re-solved.
  void rank_one_update(const Vector& x, double reward);

  /// vᵀ Σ⁻¹ v via one triangular solve.
  double quadratic_form_inv(const Vector& v) const;

  /// Σ⁻¹ v via two triangular solves.
  Vector solve(const Vector& v) const;

  std::size_t dim() const { return dim_; }
  double lambda() const { return lambda_; }
  const Matrix& gram() const { return gram_; }
  const Matrix& factor() const { return factor_; }
  const Vector& xr_sum() const { return xr_sum_; }
  const Vector& theta_hat() const { return theta_hat_; }
  double log_det() const { return log_det_; }
  std::size_t update_count() const { return update_count_; }
  std::size_t refactor_count() const { return refactor_count_; }

 private:
  void check_input(const Vector& v) const;
  void refactor();

  std::size_t dim_;
  double lambda_;
  Matrix gram_;
  Matrix factor_;
  Vector xr_sum_;
  Vector theta_hat_;
  double log_det_;
  std::size_t update_count_ = 0;
  std::size_t since_refactor_ = 0;
  std::size_t refactor_count_ = 0;
};

/// True iff log det Σ − d ln λ ≤ d ln(1 + T B² / (d λ)).
bool potential_bound_check(const RidgeState& state, std::size_t horizon, double feat_norm_bound);

}  // namespace pulse
