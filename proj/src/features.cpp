#include "pulse/features.hpp"

#include <algorithm>

#include "pulse/error.hpp"

namespace pulse {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::SyntheticInteraction: return "synthetic_interaction";
    case FeatureKind::LowerBoundTwoArm: return "lower_bound_two_arm";
    case FeatureKind::Identity: return "identity";
    case FeatureKind::Custom: return "custom";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "synthetic_interaction") return FeatureKind::SyntheticInteraction;
  if (name == "lower_bound_two_arm") return FeatureKind::LowerBoundTwoArm;
  if (name == "identity") return FeatureKind::Identity;
  if (name == "custom") return FeatureKind::Custom;
  throw InputError("unknown feature map kind '" + name + "'");
}

FeatureMap FeatureMap::synthetic_interaction(std::size_t obs_dim, std::size_t missing_dim) {
  if (obs_dim == 0) throw ParameterError("synthetic_interaction: obs_dim must be >= 1");
  FeatureMap m;
  m.kind_ = FeatureKind::SyntheticInteraction;
  m.name_ = to_string(m.kind_);
  m.obs_dim_ = obs_dim;
  m.missing_dim_ = missing_dim;
  m.output_dim_ = 1 + 2 * obs_dim + missing_dim;
  m.arm_count_ = 2;
  return m;
}

FeatureMap FeatureMap::lower_bound_two_arm(std::size_t lin_dim, std::size_t non_dim) {
  if (lin_dim == 0 || non_dim == 0) {
    throw ParameterError("lower_bound_two_arm: lin_dim and non_dim must be >= 1");
  }
  FeatureMap m;
  m.kind_ = FeatureKind::LowerBoundTwoArm;
  m.name_ = to_string(m.kind_);
  m.obs_dim_ = lin_dim + non_dim;
  m.missing_dim_ = 1;
  m.lin_dim_ = lin_dim;
  m.output_dim_ = lin_dim + non_dim + 1;
  m.arm_count_ = 2;
  return m;
}

FeatureMap FeatureMap::identity(std::size_t obs_dim, std::size_t missing_dim, std::size_t arm_count) {
  if (obs_dim + missing_dim == 0 || arm_count == 0) {
    throw ParameterError("identity map: needs a non-empty context and at least one arm");
  }
  FeatureMap m;
  m.kind_ = FeatureKind::Identity;
  m.name_ = to_string(m.kind_);
  m.obs_dim_ = obs_dim;
  m.missing_dim_ = missing_dim;
  m.output_dim_ = obs_dim + missing_dim;
  m.arm_count_ = arm_count;
  return m;
}

FeatureMap FeatureMap::custom(std::string name, std::size_t obs_dim, std::size_t missing_dim,
                              std::size_t output_dim, std::size_t arm_count, CustomFeatureFn fn,
                              bool affine_in_missing) {
  if (!fn) throw ParameterError("custom feature map '" + name + "' has no function");
  if (output_dim == 0 || arm_count == 0) {
    throw ParameterError("custom feature map '" + name + "': empty output or arm set");
  }
  FeatureMap m;
  m.kind_ = FeatureKind::Custom;
  m.name_ = std::move(name);
  m.obs_dim_ = obs_dim;
  m.missing_dim_ = missing_dim;
  m.output_dim_ = output_dim;
  m.arm_count_ = arm_count;
  m.affine_ = affine_in_missing;
  m.custom_ = std::move(fn);
  return m;
}

Vector FeatureMap::assemble(const Vector& observed, const Vector& missing) const {
  if (static_cast<std::size_t>(observed.size()) != obs_dim_ ||
      static_cast<std::size_t>(missing.size()) != missing_dim_) {
    throw InputError("feature map '" + name_ + "': cannot assemble context, expected (" +
                     std::to_string(obs_dim_) + ", " + std::to_string(missing_dim_) + ") got (" +
                     std::to_string(observed.size()) + ", " + std::to_string(missing.size()) + ")");
  }
  Vector y(full_dim());
  y << observed, missing;
  return y;
}

Vector FeatureMap::phi(const Vector& full_context, const Vector& observed, std::size_t arm) const {
  if (static_cast<std::size_t>(full_context.size()) != full_dim()) {
    throw InputError("feature map '" + name_ + "': full context has length " +
                     std::to_string(full_context.size()) + ", expected " + std::to_string(full_dim()));
  }
  if (static_cast<std::size_t>(observed.size()) != obs_dim_) {
    throw InputError("feature map '" + name_ + "': observed context has length " +
                     std::to_string(observed.size()) + ", expected " + std::to_string(obs_dim_));
  }
  if (arm >= arm_count_) {
    throw InputError("feature map '" + name_ + "': arm " + std::to_string(arm) + " out of range");
  }
  const auto ds = static_cast<Eigen::Index>(obs_dim_);
  const auto dw = static_cast<Eigen::Index>(missing_dim_);

  switch (kind_) {
    case FeatureKind::SyntheticInteraction: {
      const double a = arm == 0 ? -1.0 : 1.0;
      Vector out(static_cast<Eigen::Index>(output_dim_));
      out(0) = 1.0;
      out.segment(1, ds) = full_context.head(ds);
      out.segment(1 + ds, dw) = full_context.tail(dw);
      out.tail(ds) = a * full_context.head(ds);
      return out;
    }
    case FeatureKind::LowerBoundTwoArm: {
      if (arm == 1) return full_context;
      Vector out = Vector::Zero(static_cast<Eigen::Index>(output_dim_));
      const auto dl = static_cast<Eigen::Index>(lin_dim_);
      out.head(dl) = -full_context.head(dl);
      return out;
    }
    case FeatureKind::Identity:
      return full_context;
    case FeatureKind::Custom: {
      Vector out = custom_(full_context, observed, arm);
      if (static_cast<std::size_t>(out.size()) != output_dim_) {
        throw InputError("custom feature map '" + name_ + "' returned the wrong dimension");
      }
      return out;
    }
  }
  return {};
}

Matrix FeatureMap::arm_feature_matrix(const Vector& full_context, const Vector& observed) const {
  Matrix out(static_cast<Eigen::Index>(arm_count_), static_cast<Eigen::Index>(output_dim_));
  for (std::size_t a = 0; a < arm_count_; ++a) {
    out.row(static_cast<Eigen::Index>(a)) = phi(full_context, observed, a).transpose();
  }
  return out;
}

void FeatureRegistry::add(FeatureMap map) {
  const std::string key = map.name();
  maps_.insert_or_assign(key, std::move(map));
}

const FeatureMap& FeatureRegistry::get(const std::string& name) const {
  auto it = maps_.find(name);
  if (it == maps_.end()) throw InputError("no feature map registered as '" + name + "'");
  return it->second;
}

void FeatureNormMonitor::record(const Vector& phi, double bound) {
  ++evaluated;
  const double sup = phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0;
  const double l2 = phi.norm();
  max_sup_norm = std::max(max_sup_norm, sup);
  max_l2_norm = std::max(max_l2_norm, l2);
  if (sup > 1.0) ++sup_violations;
  if (l2 > bound) ++l2_violations;
}

}  // namespace pulse
