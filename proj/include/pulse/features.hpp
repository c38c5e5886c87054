#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "pulse/linalg.hpp"

namespace pulse {

enum class FeatureKind { SyntheticInteraction, LowerBoundTwoArm, Identity, Custom };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

/// Pure user-supplied map: (full context Y, observed S, arm) -> feature.
using CustomFeatureFn = std::function<Vector(const Vector& full, const Vector& observed, std::size_t arm)>;

/// Known feature map Φ(Y, a) together with its layout and norm bound B.
///
/// Full contexts are laid out as Y = (S, W): the observed block first, the
/// missing block after it. Arms are 0-based; for the two-arm maps index 0 is
/// a = −1 and index 1 is a = +1.
///
///  - SyntheticInteraction: Φ = (1, S, W, a·S), d = 1 + 2 d_S + d_W.
///  - LowerBoundTwoArm: S = (Q, O), Φ(Y, +1) = Y, Φ(Y, −1) = (−Q, 0, 0).
///  - Identity: Φ(Y, a) = Y for every arm.
class FeatureMap {
 public:
  static FeatureMap synthetic_interaction(std::size_t obs_dim = 1, std::size_t missing_dim = 1);
  static FeatureMap lower_bound_two_arm(std::size_t lin_dim, std::size_t non_dim);
  static FeatureMap identity(std::size_t obs_dim, std::size_t missing_dim, std::size_t arm_count = 1);
  static FeatureMap custom(std::string name, std::size_t obs_dim, std::size_t missing_dim,
                           std::size_t output_dim, std::size_t arm_count, CustomFeatureFn fn,
                           bool affine_in_missing = false);

  /// Φ(Y, arm). Throws InputError on dimension mismatch or arm out of range.
  Vector phi(const Vector& full_context, const Vector& observed, std::size_t arm) const;

  /// Row a equals phi(..., a).
  Matrix arm_feature_matrix(const Vector& full_context, const Vector& observed) const;

  /// Y = (S, W).
  Vector assemble(const Vector& observed, const Vector& missing) const;

  FeatureKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  std::size_t output_dim() const { return output_dim_; }
  std::size_t arm_count() const { return arm_count_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t missing_dim() const { return missing_dim_; }
  std::size_t full_dim() const { return obs_dim_ + missing_dim_; }
  std::size_t lin_dim() const { return lin_dim_; }

  /// Φ is affine in the missing block W, so E[Φ | S] = Φ(S, E[W | S]).
  bool affine_in_missing() const { return affine_; }

  double feat_norm_bound() const { return feat_norm_bound_; }
  void set_feat_norm_bound(double b) { feat_norm_bound_ = b; }

 private:
  FeatureMap() = default;

  FeatureKind kind_ = FeatureKind::Identity;
  std::string name_;
  std::size_t obs_dim_ = 0;
  std::size_t missing_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::size_t arm_count_ = 1;
  std::size_t lin_dim_ = 0;
  bool affine_ = true;
  double feat_norm_bound_ = 1.0;
  CustomFeatureFn custom_;
};

/// Named custom maps registered at harness setup.
class FeatureRegistry {
 public:
  void add(FeatureMap map);
  const FeatureMap& get(const std::string& name) const;
  bool contains(const std::string& name) const { return maps_.count(name) > 0; }

 private:
  std::map<std::string, FeatureMap> maps_;
};

/// Running diagnostic for the ‖Φ‖∞ ≤ 1, ‖Φ‖₂ ≤ B conditions.
struct FeatureNormMonitor {
  std::size_t evaluated = 0;
  std::size_t sup_violations = 0;
  std::size_t l2_violations = 0;
  double max_sup_norm = 0.0;
  double max_l2_norm = 0.0;

  void record(const Vector& phi, double bound);
};

}  // namespace pulse
