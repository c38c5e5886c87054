#include "pulse/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pulse/error.hpp"

namespace pulse {

double gaussian_dt(const GaussianConditional& truth, const GaussianConditional& model) {
  if (!(truth.sd > 0.0) || !(model.sd > 0.0)) throw InputError("gaussian_dt: standard deviations must be positive");
  if (!std::isfinite(truth.mean) || !std::isfinite(model.mean) || !std::isfinite(truth.sd) || !std::isfinite(model.sd))
    throw InputError("gaussian_dt: non-finite parameters");
  const double ratio = truth.sd / model.sd;
  const double diff = (truth.mean - model.mean) / model.sd;
  const double kl = -std::log(ratio) + 0.5 * (ratio * ratio + diff * diff) - 0.5;
  return 0.5 * std::max(kl, 0.0);
}

double gaussian_dt(std::span<const GaussianConditional> truth, std::span<const GaussianConditional> model) {
  if (truth.size() != model.size()) throw InputError("gaussian_dt: coordinate counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += gaussian_dt(truth[i], model[i]);
  return sum;
}

TvCheckReport tv_kl_check(const LawSampler& truth, const LawSampler& model, const std::vector<TestFunction>& family,
                          double bound, std::size_t samples, Rng& rng) {
  if (family.empty()) throw InputError("tv_kl_check: empty test-function family");
  if (samples < 2) throw InputError("tv_kl_check: needs at least two samples");
  const std::size_t k = family.size();
  std::vector<double> sp(k, 0.0), sp2(k, 0.0), sq(k, 0.0), sq2(k, 0.0);
  for (std::size_t i = 0; i < samples; ++i) {
    const Vector y = truth(rng);
    const Vector z = model(rng);
    for (std::size_t j = 0; j < k; ++j) {
      const double gy = family[j](y);
      const double gz = family[j](z);
      sp[j] += gy;
      sp2[j] += gy * gy;
      sq[j] += gz;
      sq2[j] += gz * gz;
    }
  }
  const double n = static_cast<double>(samples);
  TvCheckReport r;
  r.bound = bound;
  r.gap = -1.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double mp = sp[j] / n, mq = sq[j] / n;
    const double gap = 0.5 * std::abs(mp - mq);
    if (gap > r.gap) {
      const double vp = std::max(sp2[j] / n - mp * mp, 0.0);
      const double vq = std::max(sq2[j] / n - mq * mq, 0.0);
      r.gap = gap;
      r.best_index = j;
      r.std_error = 0.5 * std::sqrt((vp + vq) / n);
    }
  }
  r.margin = r.bound + 3.0 * r.std_error - r.gap;
  r.passed = r.margin >= 0.0;
  return r;
}

std::vector<TestFunction> default_test_family(double lo, double hi, std::size_t count) {
  std::vector<TestFunction> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double c = count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    out.emplace_back([c](const Vector& y) { return y(0) > c ? 1.0 : (y(0) < c ? -1.0 : 0.0); });
    out.emplace_back([c](const Vector& y) { return std::clamp(y(0) - c, -1.0, 1.0); });
  }
  return out;
}

// ---------------------------------------------------------------------------

double default_band_bandwidth(std::size_t fold_size, std::size_t obs_dim) {
  if (fold_size == 0) throw InputError("band: empty fold");
  const double n = static_cast<double>(fold_size);
  return std::pow(n, -(1.0 / (static_cast<double>(obs_dim) + 2.0) + 0.1));
}

Matrix default_grid(const Matrix& s, double bandwidth) {
  if (s.rows() == 0 || s.cols() == 0) throw InputError("band grid: no design points");
  if (!(bandwidth > 0.0)) throw InputError("band grid: bandwidth must be positive");
  const auto d = s.cols();
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  std::size_t total = 1;
  const double step = bandwidth / 4.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lo = s.col(j).minCoeff() + bandwidth / 2.0;
    const double hi = s.col(j).maxCoeff() - bandwidth / 2.0;
    auto& axis = axes[static_cast<std::size_t>(j)];
    if (hi < lo) {
      axis.push_back(0.5 * (s.col(j).minCoeff() + s.col(j).maxCoeff()));
    } else {
      const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
      const double offset = 0.5 * ((hi - lo) - static_cast<double>(n - 1) * step);
      for (std::size_t i = 0; i < n; ++i) axis.push_back(lo + offset + static_cast<double>(i) * step);
    }
    total *= axis.size();
    if (total > 2000000) throw InputError("band grid: too many points; the band needs a low-dimensional S");
  }
  Matrix grid(static_cast<Eigen::Index>(total), d);
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rem = r;
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto& axis = axes[static_cast<std::size_t>(j)];
      grid(static_cast<Eigen::Index>(r), j) = axis[rem % axis.size()];
      rem /= axis.size();
    }
  }
  return grid;
}

namespace {

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) ;
  return v[std::min(v.size() - 1, idx == 0 ? 0 : idx - 1)];
}

std::vector<Eigen::Index> sorted_by_first(const Matrix& s) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return s(a, 0) < s(b, 0); });
  return order;
}

}  // namespace

BandEstimate estimate_dt_band(const HistoricalDataset& data, const Matrix& grid_in, const BandOptions& opt) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw InputError("band: alpha must lie in (0,1)");
  if (opt.bootstrap_draws < 10) throw InputError("band: needs at least 10 bootstrap draws");
  auto [s_all, w_all] = data.flattened();
  const Eigen::Index n = s_all.rows();
  if (n < 4) throw InputError("band: each fold needs at least two pairs");
  const Eigen::Index ds = s_all.cols();
  const Eigen::Index dw = w_all.cols();

  Rng split_rng(derive_seed(opt.split_seed, "split"));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), split_rng.engine());
  const Eigen::Index n0 = n / 2;
  const Eigen::Index n1 = n - n0;
  Matrix s0(n0, ds), w0(n0, dw);
  HistoricalDataset fold1;
  fold1.seed = data.seed;
  fold1.env_id = data.env_id;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = perm[static_cast<std::size_t>(i)];
    if (i < n0) {
      s0.row(i) = s_all.row(src);
      w0.row(i) = w_all.row(src);
    } else {
      fold1.s.push_back(s_all.row(src));
      fold1.w.push_back(w_all.row(src));
    }
  }

  BandEstimate est;
  est.alpha = opt.alpha;
  est.fold0_size = static_cast<std::size_t>(n0);
  est.fold1_size = static_cast<std::size_t>(n1);
  est.bandwidth = opt.bandwidth > 0.0 ? opt.bandwidth : default_band_bandwidth(static_cast<std::size_t>(n0), static_cast<std::size_t>(ds));
  est.grid = grid_in.size() == 0 ? default_grid(s0, est.bandwidth) : grid_in;
  if (est.grid.cols() != ds) throw InputError("band: grid dimension differs from d_S");
  if (!est.grid.allFinite()) throw InputError("band: grid has non-finite points");
  const Eigen::Index g = est.grid.rows();

  // Windows ‖s − gᵢ‖∞ ≤ h/2 on fold I₀.
  const auto order = sorted_by_first(s0);
  std::vector<double> first(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) first[i] = s0(order[i], 0);
  const double half = est.bandwidth / 2.0;
  std::vector<std::vector<Eigen::Index>> windows(static_cast<std::size_t>(g));
  for (Eigen::Index k = 0; k < g; ++k) {
    const Vector pt = est.grid.row(k).transpose();
    const auto lo = std::lower_bound(first.begin(), first.end(), pt(0) - half) - first.begin();
    const auto hi = std::upper_bound(first.begin(), first.end(), pt(0) + half) - first.begin();
    for (auto i = lo; i < hi; ++i) {
      const Eigen::Index src = order[static_cast<std::size_t>(i)];
      if (((s0.row(src).transpose() - pt).array().abs() <= half).all()) windows[static_cast<std::size_t>(k)].push_back(src);
    }
  }

  est.centers = Matrix::Zero(g, dw);
  Matrix sigma = Matrix::Zero(g, dw);
  est.window_counts.resize(static_cast<std::size_t>(g));
  std::vector<bool> usable(static_cast<std::size_t>(g));
  for (Eigen::Index k = 0; k < g; ++k) {
    const auto& win = windows[static_cast<std::size_t>(k)];
    est.window_counts[static_cast<std::size_t>(k)] = win.size();
    usable[static_cast<std::size_t>(k)] = win.size() >= 2;
    if (!usable[static_cast<std::size_t>(k)]) {
      ++est.empty_points;
      continue;
    }
    const double m = static_cast<double>(win.size());
    Vector mean = Vector::Zero(dw);
    for (auto i : win) mean += w0.row(i).transpose();
    mean /= m;
    Vector ss = Vector::Zero(dw);
    for (auto i : win) ss += (w0.row(i).transpose() - mean).cwiseAbs2();
    est.centers.row(k) = mean.transpose();
    sigma.row(k) = (ss / m).cwiseSqrt().transpose();
  }
  if (est.empty_points == static_cast<std::size_t>(g)) throw InputError("band: every grid point has fewer than two fold-0 neighbours");

  // Multiplier bootstrap of sup_s |Σ ξᵢ ε̂ᵢ| / (√n_s σ̂_s), one sup per coordinate.
  Rng boot(derive_seed(opt.split_seed, "bootstrap"));
  const double level = 1.0 - opt.alpha / static_cast<double>(dw);
  est.critical_values = Vector::Zero(dw);
  std::vector<std::vector<double>> sups(static_cast<std::size_t>(dw), std::vector<double>(opt.bootstrap_draws, 0.0));
  Vector xi(n0);
  for (std::size_t b = 0; b < opt.bootstrap_draws; ++b) {
    for (auto& v : xi) v = boot.normal();
    for (Eigen::Index k = 0; k < g; ++k) {
      if (!usable[static_cast<std::size_t>(k)]) continue;
      const auto& win = windows[static_cast<std::size_t>(k)];
      const double root_n = std::sqrt(static_cast<double>(win.size()));
      for (Eigen::Index c = 0; c < dw; ++c) {
        if (!(sigma(k, c) > 0.0)) continue;
        double acc = 0.0;
        for (auto i : win) acc += xi(i) * (w0(i, c) - est.centers(k, c));
        const double t = std::abs(acc) / (root_n * sigma(k, c));
        auto& slot = sups[static_cast<std::size_t>(c)][b];
        slot = std::max(slot, t);
      }
    }
  }
  for (Eigen::Index c = 0; c < dw; ++c) est.critical_values(c) = quantile(sups[static_cast<std::size_t>(c)], level);

  est.half_widths = Matrix::Zero(g, dw);
  for (Eigen::Index k = 0; k < g; ++k) {
    if (!usable[static_cast<std::size_t>(k)]) continue;
    const double root_n = std::sqrt(static_cast<double>(windows[static_cast<std::size_t>(k)].size()));
    for (Eigen::Index c = 0; c < dw; ++c) est.half_widths(k, c) = est.critical_values(c) * sigma(k, c) / root_n;
  }

  if (opt.fit_target) {
    const Imputer target = opt.fit_target(fold1);
    est.target_means = Matrix::Zero(g, dw);
    for (Eigen::Index k = 0; k < g; ++k) {
      const std::vector<Vector> history = {est.grid.row(k).transpose()};
      est.target_means.row(k) = target.mean(history).transpose();
    }
  } else {
    est.target_means = est.centers;
  }
  est.cross_term = (est.centers - est.target_means).cwiseAbs();

  est.dhat = 0.0;
  for (Eigen::Index k = 0; k < g; ++k) {
    if (!usable[static_cast<std::size_t>(k)]) continue;
    est.dhat = std::max(est.dhat, (est.half_widths.row(k) + est.cross_term.row(k)).maxCoeff());
  }

  // Largest change of the reference fit between grid points at most h/4 apart.
  const double reach = est.bandwidth / 4.0 * (1.0 + 1e-9);
  const auto gorder = sorted_by_first(est.grid);
  for (std::size_t a = 0; a < gorder.size(); ++a) {
    const Eigen::Index ia = gorder[a];
    if (!usable[static_cast<std::size_t>(ia)]) continue;
    for (std::size_t b = a + 1; b < gorder.size(); ++b) {
      const Eigen::Index ib = gorder[b];
      if (est.grid(ib, 0) - est.grid(ia, 0) > reach) break;
      if (!usable[static_cast<std::size_t>(ib)]) continue;
      if ((est.grid.row(ia) - est.grid.row(ib)).cwiseAbs().maxCoeff() > reach) continue;
      est.modulus = std::max(est.modulus, (est.centers.row(ia) - est.centers.row(ib)).cwiseAbs().maxCoeff());
    }
  }
  return est;
}

namespace {

nlohmann::json rows_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

nlohmann::json BandEstimate::report() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["bandwidth"] = bandwidth;
  j["dhat"] = dhat;
  j["plug_in_dt"] = plug_in_dt();
  j["surrogate"] = true;
  j["modulus"] = modulus;
  j["empty_points"] = empty_points;
  j["fold_sizes"] = {fold0_size, fold1_size};
  j["critical_values"] = std::vector<double>(critical_values.data(), critical_values.data() + critical_values.size());
  j["grid"] = rows_json(grid);
  j["centers"] = rows_json(centers);
  j["half_widths"] = rows_json(half_widths);
  j["target_means"] = rows_json(target_means);
  j["cross_term"] = rows_json(cross_term);
  j["window_counts"] = window_counts;
  return j;
}

}  // namespace pulse
