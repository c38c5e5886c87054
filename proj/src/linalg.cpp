#include "pulse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pulse/error.hpp"

namespace pulse {

RidgeState::RidgeState(std::size_t dim, double lambda) : dim_(dim), lambda_(lambda) {
  if (dim == 0) throw ParameterError("ridge state: dim must be >= 1");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("ridge state: lambda must be a positive finite number");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  gram_ = Matrix::Identity(d, d) * lambda;
  factor_ = Matrix::Identity(d, d) * std::sqrt(lambda);
  xr_sum_ = Vector::Zero(d);
  theta_hat_ = Vector::Zero(d);
  log_det_ = static_cast<double>(dim) * std::log(lambda);
}

void RidgeState::check_input(const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw InputError("ridge state: vector has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(dim_));
  }
  if (!v.allFinite()) throw InputError("ridge state: vector has non-finite entries");
}

double RidgeState::quadratic_form_inv(const Vector& v) const {
  check_input(v);
  const Vector w = factor_.triangularView<Eigen::Lower>().solve(v);
  return w.squaredNorm();
}

Vector RidgeState::solve(const Vector& v) const {
  check_input(v);
  Vector w = factor_.triangularView<Eigen::Lower>().solve(v);
  factor_.transpose().triangularView<Eigen::Upper>().solveInPlace(w);
  return w;
}

void RidgeState::rank_one_update(const Vector& x, double reward) {
  check_input(x);
  if (!std::isfinite(reward)) throw InputError("ridge state: reward is not finite");

  ++update_count_;
  if (x.isZero(0.0)) return;

  // Sylvester: det(Σ + x xᵀ) = det(Σ) (1 + xᵀ Σ⁻¹ x).
  log_det_ += std::log1p(quadratic_form_inv(x));
  gram_.noalias() += x * x.transpose();
  xr_sum_ += reward * x;

  Vector work = x;
  double min_pivot = std::numeric_limits<double>::infinity();
  const auto d = static_cast<Eigen::Index>(dim_);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lkk = factor_(k, k);
    const double r = std::hypot(lkk, work(k));
    const double c = r / lkk;
    const double s = work(k) / lkk;
    factor_(k, k) = r;
    for (Eigen::Index i = k + 1; i < d; ++i) {
      factor_(i, k) = (factor_(i, k) + s * work(i)) / c;
      work(i) = c * work(i) - s * factor_(i, k);
    }
    min_pivot = std::min(min_pivot, r);
  }

  ++since_refactor_;
  if (since_refactor_ >= kRefactorInterval || !(min_pivot >= kPivotFloor * lambda_)) refactor();

  theta_hat_ = solve(xr_sum_);
}

void RidgeState::refactor() {
  Eigen::LLT<Matrix> llt(gram_);
  if (llt.info() != Eigen::Success) {
    throw ConsistencyError("ridge state: Gram matrix is no longer positive definite");
  }
  factor_ = llt.matrixL();
  for (Eigen::Index k = 0; k < factor_.rows(); ++k) {
    if (!(factor_(k, k) > 0.0)) {
      throw ConsistencyError("ridge state: non-positive Cholesky pivot after refactorization");
    }
  }
  since_refactor_ = 0;
  ++refactor_count_;
}

bool potential_bound_check(const RidgeState& state, std::size_t horizon, double feat_norm_bound) {
  const double d = static_cast<double>(state.dim());
  const double lhs = state.log_det() - d * std::log(state.lambda());
  const double rhs =
      d * std::log1p(static_cast<double>(horizon) * feat_norm_bound * feat_norm_bound /
                     (d * state.lambda()));
  return lhs <= rhs;
}

}  // namespace pulse
