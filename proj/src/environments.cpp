#include "pulse/environments.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "pulse/error.hpp"

namespace pulse {

EnvironmentStep make_step(std::size_t t, const FeatureMap& map, const Vector& theta_star,
                          Vector full_context, Vector observed, double eta) {
  EnvironmentStep s;
  s.t = t;
  const Matrix feats = map.arm_feature_matrix(full_context, observed);
  s.mean_rewards = feats * theta_star;
  s.potential_rewards = s.mean_rewards.array() + eta;
  s.eta = eta;
  s.optimal_arm = 0;
  for (Eigen::Index a = 1; a < s.mean_rewards.size(); ++a) {
    if (s.mean_rewards(a) > s.mean_rewards(static_cast<Eigen::Index>(s.optimal_arm))) {
      s.optimal_arm = static_cast<std::size_t>(a);
    }
  }
  s.optimal_mean = s.mean_rewards(static_cast<Eigen::Index>(s.optimal_arm));
  s.full_context = std::move(full_context);
  s.observed = std::move(observed);
  return s;
}

// ---------------------------------------------------------------------------

void SyntheticEnvConfig::validate() const {
  if (beta_star.size() != 2) throw ParameterError("synthetic env: beta_star must have 2 entries");
  if (theta_star.size() != 4) throw ParameterError("synthetic env: theta_star must have 4 entries");
  if (innovation_sd < 0 || xi_sd < 0 || eta_sd < 0) {
    throw ParameterError("synthetic env: noise standard deviations must be >= 0");
  }
  if (lag_window == 0) throw ParameterError("synthetic env: lag_window must be >= 1");
  if (!(ar_min_root_modulus(ar1, ar2) > 1.0)) {
    throw ParameterError("synthetic env: AR part is not stationary");
  }
}

double ar_min_root_modulus(double ar1, double ar2) {
  // Roots of 1 − ar1 z − ar2 z² = 0.
  if (ar2 == 0.0) {
    return ar1 == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / std::abs(ar1);
  }
  const std::complex<double> a(-ar2), b(-ar1), c(1.0);
  const std::complex<double> disc = std::sqrt(b * b - 4.0 * a * c);
  const std::complex<double> z1 = (-b + disc) / (2.0 * a);
  const std::complex<double> z2 = (-b - disc) / (2.0 * a);
  return std::min(std::abs(z1), std::abs(z2));
}

double arma_lag1_autocorrelation(const SyntheticEnvConfig& c) {
  const double p1 = c.ar1, p2 = c.ar2, q1 = c.ma1, q2 = c.ma2;
  const double psi1 = p1 + q1;
  const double psi2 = p1 * psi1 + p2 + q2;
  // γ(k) − p1 γ(k−1) − p2 γ(k−2) = σ² Σ_{j≥k} q_j ψ_{j−k}, k = 0, 1, 2 (σ² = 1).
  Eigen::Matrix3d a;
  a << 1.0, -p1, -p2,
       -p1, 1.0 - p2, 0.0,
       -p2, -p1, 1.0;
  const Eigen::Vector3d rhs(1.0 + q1 * psi1 + q2 * psi2, q1 + q2 * psi1, q2);
  const Eigen::Vector3d g = a.partialPivLu().solve(rhs);
  return g(1) / g(0);
}

double synthetic_lag_mean(const SyntheticEnvConfig& config, std::span<const Vector> history) {
  double sum = 0.0;
  const std::size_t n = std::min(config.lag_window, history.size());
  for (std::size_t j = 0; j < n; ++j) sum += history[history.size() - 1 - j](0);
  return sum / static_cast<double>(config.lag_window);
}

double synthetic_w_mean(const SyntheticEnvConfig& config, std::span<const Vector> history) {
  const double x2 = synthetic_lag_mean(config, history);
  double mean = config.beta_star(0) + config.beta_star(1) * x2;
  if (config.w_model == WModel::Nonlinear) mean += std::sin(config.rho * x2);
  return mean;
}

std::vector<GaussianConditional> SyntheticLaw::conditional(std::span<const Vector> history) const {
  return {GaussianConditional{synthetic_w_mean(config_, history), config_.xi_sd}};
}

SyntheticEnv::SyntheticEnv(SyntheticEnvConfig config, std::uint64_t seed)
    : config_(std::move(config)), map_(FeatureMap::synthetic_interaction(1, 1)) {
  config_.validate();
  law_ = std::make_shared<SyntheticLaw>(config_);
  reset(seed);
}

std::string SyntheticEnv::id() const {
  if (config_.w_model == WModel::Linear) return "synthetic_linear";
  std::ostringstream os;
  os << "synthetic_nonlinear_rho" << config_.rho;
  return os.str();
}

void SyntheticEnv::reset(std::uint64_t seed) {
  context_rng_ = Rng(derive_seed(seed, "context"));
  eta_rng_ = Rng(derive_seed(seed, "eta"));
  s_lag1_ = s_lag2_ = e_lag1_ = e_lag2_ = 0.0;
  window_.clear();
  t_ = 0;
  for (std::size_t i = 0; i < config_.burn_in; ++i) {
    const double s = advance_arma();
    window_.push_back(Vector::Constant(1, s));
    if (window_.size() > config_.lag_window) window_.erase(window_.begin());
  }
  presample_.clear();
  const std::size_t keep = std::min(window_.size(), config_.lag_window - 1);
  presample_.assign(window_.end() - static_cast<std::ptrdiff_t>(keep), window_.end());
  window_ = presample_;
}

double SyntheticEnv::advance_arma() {
  const double e = context_rng_.normal(0.0, config_.innovation_sd);
  const double s = config_.ar1 * s_lag1_ + config_.ar2 * s_lag2_ + e + config_.ma1 * e_lag1_ +
                   config_.ma2 * e_lag2_;
  s_lag2_ = s_lag1_;
  s_lag1_ = s;
  e_lag2_ = e_lag1_;
  e_lag1_ = e;
  return s;
}

std::vector<Vector> SyntheticEnv::presample_history() const { return presample_; }

EnvironmentStep SyntheticEnv::step() {
  ++t_;
  const double s = advance_arma();
  window_.push_back(Vector::Constant(1, s));
  if (window_.size() > config_.lag_window) window_.erase(window_.begin());

  const double w_mean = synthetic_w_mean(config_, window_);
  const double w = w_mean + context_rng_.normal(0.0, config_.xi_sd);
  const double eta = eta_rng_.normal(0.0, config_.eta_sd);

  Vector observed = Vector::Constant(1, s);
  Vector full(2);
  full << s, w;
  EnvironmentStep out = make_step(t_, map_, config_.theta_star, std::move(full), observed, eta);

  Vector cond_full(2);
  cond_full << s, w_mean;
  out.conditional_mean_rewards = map_.arm_feature_matrix(cond_full, observed) * config_.theta_star;
  return out;
}

// ---------------------------------------------------------------------------

BumpFunction BumpFunction::make(std::size_t dim, std::size_t bins_per_dim, double beta,
                                double lipschitz, double fill_fraction, std::uint64_t sign_seed) {
  if (dim == 0 || bins_per_dim == 0) throw ParameterError("bump function: empty partition");
  if (!(beta > 0.0 && beta <= 1.0)) throw ParameterError("bump function: beta must be in (0, 1]");
  if (!(lipschitz > 0.0)) throw ParameterError("bump function: L must be positive");
  if (!(fill_fraction > 0.0 && fill_fraction <= 1.0)) {
    throw ParameterError("bump function: fill fraction must be in (0, 1]");
  }
  BumpFunction f;
  f.dim = dim;
  f.bins_per_dim = bins_per_dim;
  f.beta = beta;
  f.lipschitz = lipschitz;
  const double total = std::pow(static_cast<double>(bins_per_dim), static_cast<double>(dim));
  const auto m = static_cast<std::size_t>(std::ceil(fill_fraction * total));
  Rng rng(derive_seed(sign_seed, "bump-signs"));
  f.omega.resize(m);
  for (auto& w : f.omega) w = rng.bernoulli(0.5) ? 1 : -1;
  return f;
}

double BumpFunction::operator()(const Vector& o) const {
  if (static_cast<std::size_t>(o.size()) != dim) throw InputError("bump function: wrong dimension");
  const double m = static_cast<double>(bins_per_dim);
  std::size_t k = 0;
  std::size_t stride = 1;
  double sup = 0.0;
  for (std::size_t l = 0; l < dim; ++l) {
    const double x = o(static_cast<Eigen::Index>(l));
    if (!(x >= 0.0 && x <= 1.0)) return 0.0;
    const auto kl = std::min(bins_per_dim, static_cast<std::size_t>(std::floor(x * m)) + 1);
    const double center = static_cast<double>(kl) / m - 0.5 / m;
    sup = std::max(sup, std::abs(2.0 * m * (x - center)));
    k += (kl - 1) * stride;
    stride *= bins_per_dim;
  }
  if (k >= omega.size()) return 0.0;
  const double c_phi = lipschitz / (beta * std::pow(2.0, beta));
  const double bump = sup <= 1.0 ? std::pow(1.0 - sup, beta) : 0.0;
  return omega[k] * std::pow(m, -beta) * c_phi * bump;
}

namespace {

class LowerBoundLaw final : public ConditionalLaw {
 public:
  LowerBoundLaw(RegressionFn f, std::size_t lin_dim, double sd)
      : f_(std::move(f)), lin_dim_(lin_dim), sd_(sd) {}

  std::vector<GaussianConditional> conditional(std::span<const Vector> history) const override {
    const Vector& s = history.back();
    const auto lin = static_cast<Eigen::Index>(lin_dim_);
    return {GaussianConditional{f_(s.tail(s.size() - lin)), sd_}};
  }

 private:
  RegressionFn f_;
  std::size_t lin_dim_;
  double sd_;
};

}  // namespace

void LowerBoundEnvConfig::validate() const {
  if (lin_dim == 0 || non_dim == 0) throw ParameterError("lower-bound env: dimensions must be >= 1");
  if (horizon == 0) throw ParameterError("lower-bound env: horizon must be >= 1");
  if (!f) throw ParameterError("lower-bound env: regression function f is not set");
  if (!theta_signs.empty() && theta_signs.size() != lin_dim) {
    throw ParameterError("lower-bound env: theta_signs must have lin_dim entries");
  }
  if (reward_sd < 0 || w_noise_sd < 0) throw ParameterError("lower-bound env: negative noise sd");
  if (anchor.size() != 0) {
    if (static_cast<std::size_t>(anchor.size()) != non_dim) {
      throw ParameterError("lower-bound env: anchor must have non_dim entries");
    }
    if (anchor.cwiseAbs().maxCoeff() <= 1.0) {
      throw ParameterError("lower-bound env: anchor must lie outside [-1,1]^non_dim");
    }
  }
}

LowerBoundEnv::LowerBoundEnv(LowerBoundEnvConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      map_(FeatureMap::lower_bound_two_arm(config_.lin_dim == 0 ? 1 : config_.lin_dim,
                                           config_.non_dim == 0 ? 1 : config_.non_dim)) {
  config_.validate();
  if (config_.anchor.size() == 0) {
    config_.anchor = Vector::Constant(static_cast<Eigen::Index>(config_.non_dim), 2.0);
  }
  const double f0 = config_.f(config_.anchor);
  if (!std::isfinite(f0) || f0 != 0.0) {
    throw ParameterError("lower-bound env: f must vanish at the anchor o0");
  }
  const auto dl = static_cast<Eigen::Index>(config_.lin_dim);
  theta_ = Vector::Zero(static_cast<Eigen::Index>(map_.output_dim()));
  const double mag = std::sqrt(static_cast<double>(config_.lin_dim) / static_cast<double>(config_.horizon));
  for (Eigen::Index i = 0; i < dl; ++i) {
    const int sign = config_.theta_signs.empty() ? 1 : config_.theta_signs[static_cast<std::size_t>(i)];
    theta_(i) = sign >= 0 ? mag : -mag;
  }
  theta_(theta_.size() - 1) = 0.5;
  if (config_.w_noise_sd > 0.0) {
    law_ = std::make_shared<LowerBoundLaw>(config_.f, config_.lin_dim, config_.w_noise_sd);
  }
  context_rng_ = Rng(derive_seed(seed, "context"));
  eta_rng_ = Rng(derive_seed(seed, "eta"));
}

EnvironmentStep LowerBoundEnv::step() {
  const int branch = context_rng_.bernoulli(0.5) ? 1 : 0;
  return draw(branch);
}

EnvironmentStep LowerBoundEnv::step_with_branch(int branch) {
  if (branch != 0 && branch != 1) throw InputError("lower-bound env: branch must be 0 or 1");
  return draw(branch);
}

EnvironmentStep LowerBoundEnv::draw(int branch) {
  ++t_;
  last_branch_ = branch;
  const auto dl = static_cast<Eigen::Index>(config_.lin_dim);
  const auto dn = static_cast<Eigen::Index>(config_.non_dim);
  Vector q = Vector::Zero(dl);
  Vector o(dn);
  if (branch == 0) {
    for (Eigen::Index i = 0; i < dn; ++i) o(i) = context_rng_.uniform(-1.0, 1.0);
  } else {
    q(static_cast<Eigen::Index>(context_rng_.index(config_.lin_dim))) = 1.0;
    o = config_.anchor;
  }
  const double fo = config_.f(o);
  if (!std::isfinite(fo)) throw EnvironmentError("lower-bound env: f returned a non-finite value");
  const double w = fo + (config_.w_noise_sd > 0.0 ? context_rng_.normal(0.0, config_.w_noise_sd) : 0.0);
  const double eta = eta_rng_.normal(0.0, config_.reward_sd);

  Vector observed(dl + dn);
  observed << q, o;
  Vector full(dl + dn + 1);
  full << q, o, w;
  EnvironmentStep out = make_step(t_, map_, theta_, std::move(full), observed, eta);
  Vector cond_full(dl + dn + 1);
  cond_full << q, o, fo;
  out.conditional_mean_rewards = map_.arm_feature_matrix(cond_full, observed) * theta_;
  return out;
}

// ---------------------------------------------------------------------------

ReplayLog::ReplayLog(std::vector<ReplayRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) return;
  obs_dim_ = static_cast<std::size_t>(rows_.front().observed.size());
  full_dim_ = static_cast<std::size_t>(rows_.front().full.size());
  for (const auto& r : rows_) {
    if (static_cast<std::size_t>(r.observed.size()) != obs_dim_ ||
        static_cast<std::size_t>(r.full.size()) != full_dim_) {
      throw InputError("replay log: row " + std::to_string(r.row_id) + " has inconsistent dimensions");
    }
    if (r.reward != 0 && r.reward != 1) {
      throw InputError("replay log: row " + std::to_string(r.row_id) + " reward must be 0 or 1");
    }
  }
  if (full_dim_ != 0 && full_dim_ < obs_dim_) {
    throw InputError("replay log: full features must extend the observed ones");
  }
}

double ReplayLog::base_rate() const {
  if (rows_.empty()) return 0.0;
  double clicks = 0.0;
  for (const auto& r : rows_) clicks += r.reward;
  return clicks / static_cast<double>(rows_.size());
}

ReplayLog ReplayLog::slice(std::size_t first, std::size_t last) const {
  last = std::min(last, rows_.size());
  first = std::min(first, last);
  return ReplayLog(std::vector<ReplayRow>(rows_.begin() + static_cast<std::ptrdiff_t>(first),
                                          rows_.begin() + static_cast<std::ptrdiff_t>(last)));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw InputError("replay log: cannot parse '" + s + "' at " + where);
  }
  if (pos != s.size()) throw InputError("replay log: trailing characters in '" + s + "' at " + where);
  return v;
}

}  // namespace

ReplayLog ReplayLog::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("replay log: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("replay log: '" + path + "' is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "row_id" || header[1] != "pool_id" || header[2] != "reward") {
    throw InputError("replay log: header must start with row_id,pool_id,reward,s_0");
  }
  std::size_t ds = 0, dy = 0;
  for (std::size_t i = 3; i < header.size(); ++i) {
    const std::string expect_s = "s_" + std::to_string(ds);
    const std::string expect_y = "y_" + std::to_string(dy);
    if (dy == 0 && header[i] == expect_s) {
      ++ds;
    } else if (header[i] == expect_y) {
      ++dy;
    } else {
      throw InputError("replay log: unexpected column '" + header[i] + "'");
    }
  }
  if (ds == 0) throw InputError("replay log: no observed columns s_0..");

  std::vector<ReplayRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() != header.size()) throw InputError("replay log: wrong column count at " + where);
    ReplayRow r;
    r.row_id = static_cast<std::int64_t>(parse_double(cells[0], where));
    r.pool_id = static_cast<std::int64_t>(parse_double(cells[1], where));
    r.reward = static_cast<int>(parse_double(cells[2], where));
    r.observed.resize(static_cast<Eigen::Index>(ds));
    for (std::size_t j = 0; j < ds; ++j) r.observed(static_cast<Eigen::Index>(j)) = parse_double(cells[3 + j], where);
    r.full.resize(static_cast<Eigen::Index>(dy));
    for (std::size_t j = 0; j < dy; ++j) r.full(static_cast<Eigen::Index>(j)) = parse_double(cells[3 + ds + j], where);
    rows.push_back(std::move(r));
  }
  return ReplayLog(std::move(rows));
}

void ReplayLog::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("replay log: cannot write '" + path + "'");
  out << "row_id,pool_id,reward";
  for (std::size_t j = 0; j < obs_dim_; ++j) out << ",s_" << j;
  for (std::size_t j = 0; j < full_dim_; ++j) out << ",y_" << j;
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows_) {
    out << r.row_id << ',' << r.pool_id << ',' << r.reward;
    for (Eigen::Index j = 0; j < r.observed.size(); ++j) out << ',' << r.observed(j);
    for (Eigen::Index j = 0; j < r.full.size(); ++j) out << ',' << r.full(j);
    out << '\n';
  }
}

ReplayLog generate_replay_log(const ReplayLogSpec& spec) {
  if (spec.rows == 0 || spec.obs_dim == 0) throw ParameterError("replay generator: empty log requested");
  Rng rng(derive_seed(spec.seed, "replay-log"));
  const auto ds = static_cast<Eigen::Index>(spec.obs_dim);
  const auto dw = static_cast<Eigen::Index>(spec.missing_dim);
  Matrix mixing(dw, ds);
  for (Eigen::Index i = 0; i < dw; ++i)
    for (Eigen::Index j = 0; j < ds; ++j) mixing(i, j) = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(ds)));
  Vector w_obs(ds), w_mis(dw);
  for (Eigen::Index j = 0; j < ds; ++j) w_obs(j) = rng.normal(0.0, spec.observed_weight / std::sqrt(static_cast<double>(ds)));
  for (Eigen::Index j = 0; j < dw; ++j) w_mis(j) = rng.normal(0.0, spec.missing_weight / std::sqrt(static_cast<double>(std::max<Eigen::Index>(dw, 1))));

  std::vector<ReplayRow> rows;
  rows.reserve(spec.rows);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    ReplayRow r;
    r.row_id = static_cast<std::int64_t>(i);
    r.pool_id = static_cast<std::int64_t>(rng.index(std::max<std::size_t>(spec.pools, 1)));
    r.observed.resize(ds);
    for (Eigen::Index j = 0; j < ds; ++j) r.observed(j) = rng.normal();
    Vector w = mixing * r.observed;
    for (Eigen::Index j = 0; j < dw; ++j) w(j) += rng.normal(0.0, spec.missing_noise_sd);
    r.full.resize(ds + dw);
    r.full << r.observed, w;
    const double logit = spec.base_logit + w_obs.dot(r.observed) + w_mis.dot(w);
    r.reward = rng.bernoulli(1.0 / (1.0 + std::exp(-logit))) ? 1 : 0;
    rows.push_back(std::move(r));
  }
  return ReplayLog(std::move(rows));
}

int ReplayDraw::reveal(std::size_t choice) const {
  if (choice >= candidates.size()) throw InputError("replay: choice out of range");
  return log->rows()[candidates[choice]].reward;
}

ReplayStream::ReplayStream(const ReplayLog& log, std::size_t k, std::uint64_t seed)
    : log_(&log), k_(k), rounds_(0), rng_(derive_seed(seed, "replay")) {
  if (k == 0) throw ParameterError("replay: candidate count k must be >= 1");
  if (k > log.size()) throw ParameterError("replay: k exceeds the number of logged rows");
  rounds_ = log.size() - k;
  scratch_.resize(log.size());
  std::iota(scratch_.begin(), scratch_.end(), std::size_t{0});
}

std::optional<ReplayDraw> ReplayStream::next() {
  if (cursor_ >= rounds_) return std::nullopt;
  // Partial Fisher–Yates: the first k slots become a uniform k-subset.
  const std::size_t n = scratch_.size();
  for (std::size_t i = 0; i < k_; ++i) {
    const std::size_t j = i + rng_.index(n - i);
    std::swap(scratch_[i], scratch_[j]);
  }
  ReplayDraw d;
  d.round = ++cursor_;
  d.candidates.assign(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(k_));
  d.log = log_;
  return d;
}

}  // namespace pulse
