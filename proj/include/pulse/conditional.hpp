#pragma once

#include <span>
#include <vector>

#include "pulse/linalg.hpp"

namespace pulse {

/// Univariate Gaussian N(mean, sd²); sd > 0.
struct GaussianConditional {
  double mean = 0.0;
  double sd = 1.0;
};

/// Law of the missing block W_t given the observed history S_{1:t} (oldest
/// first, S_t last), one independent Gaussian per missing coordinate.
class ConditionalLaw {
 public:
  virtual ~ConditionalLaw() = default;
  virtual std::vector<GaussianConditional> conditional(std::span<const Vector> history) const = 0;
};

}  // namespace pulse
