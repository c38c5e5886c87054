#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pulse/conditional.hpp"
#include "pulse/imputation.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

namespace pulse {

/// ½ KL(truth ‖ model) for univariate Gaussians. Throws InputError if an sd ≤ 0.
double gaussian_dt(const GaussianConditional& truth, const GaussianConditional& model);

/// Coordinatewise sum of gaussian_dt.
double gaussian_dt(std::span<const GaussianConditional> truth, std::span<const GaussianConditional> model);

using LawSampler = std::function<Vector(Rng&)>;
using TestFunction = std::function<double(const Vector&)>;

struct TvCheckReport {
  double gap = 0.0;       ///< max over the family of ½|E_truth g − E_model g| (a TV estimate)
  double std_error = 0.0; ///< Monte-Carlo standard error of `gap` at the maximizing g
  double bound = 0.0;
  double margin = 0.0;    ///< bound + 3·std_error − gap
  std::size_t best_index = 0;
  bool passed = false;
};

/// Monte-Carlo check of sup_g ½|E_p g − E_q g| ≤ bound over a family with ‖g‖∞ ≤ 1.
/// For a Lemma 1 check pass bound = √D_t.
TvCheckReport tv_kl_check(const LawSampler& truth, const LawSampler& model, const std::vector<TestFunction>& family,
                          double bound, std::size_t samples, Rng& rng);

/// Threshold signs and clipped unit-slope ramps on the first coordinate.
std::vector<TestFunction> default_test_family(double lo = -4.0, double hi = 4.0, std::size_t count = 33);

struct BandOptions {
  double alpha = 0.1;
  std::uint64_t split_seed = 0;
  std::size_t bootstrap_draws = 200;
  /// Reference bandwidth; 0 selects the undersmoothed default.
  double bandwidth = 0.0;
  /// Fits the target imputer on fold I₁. Unset means p̂ = p̂₀.
  std::function<Imputer(const HistoricalDataset&)> fit_target;
};

struct BandEstimate {
  Matrix grid;         ///< G × d_S
  Matrix centers;      ///< G × d_W, μ_{p̂₀}
  Matrix half_widths;  ///< G × d_W, r_{1−α}
  Matrix target_means; ///< G × d_W, μ_{p̂}
  Matrix cross_term;   ///< G × d_W, |μ_{p̂₀} − μ_{p̂}|
  std::vector<std::size_t> window_counts;
  Vector critical_values;  ///< per missing coordinate (Bonferroni α/d_W)
  double alpha = 0.1;
  double bandwidth = 0.0;
  double dhat = 0.0;
  double modulus = 0.0;  ///< max |Δμ_{p̂₀}| between neighbouring grid points
  std::size_t empty_points = 0;
  std::size_t fold0_size = 0;
  std::size_t fold1_size = 0;

  /// D̂ handed to the γ schedule: dhat², a surrogate outside the unit-variance Gaussian case.
  double plug_in_dt() const { return dhat * dhat; }
  nlohmann::json report() const;
};

/// h = n₀^{−(1/(d_S+2) + 1/10)}: undersmoothed so bias is negligible against the band.
double default_band_bandwidth(std::size_t fold_size, std::size_t obs_dim);

/// Interior product grid over the bounding box of `s`, spacing h/4, inset by h/2.
Matrix default_grid(const Matrix& s, double bandwidth);

/// Uniform band for E[W | S = s] from a 50/50 split and a multiplier bootstrap.
/// An empty `grid` selects default_grid on fold I₀.
BandEstimate estimate_dt_band(const HistoricalDataset& data, const Matrix& grid, const BandOptions& options);

}  // namespace pulse
