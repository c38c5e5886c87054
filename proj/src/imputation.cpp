#include "pulse/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pulse/environments.hpp"
#include "pulse/error.hpp"
#include "pulse/textdoc.hpp"

namespace pulse {

void HistoricalDataset::validate() const {
  if (s.empty()) throw InputError("historical dataset has no trajectories");
  if (s.size() != w.size()) throw InputError("historical dataset: S and W trajectory counts differ");
  const auto t0 = s.front().rows();
  const auto ds = s.front().cols();
  const auto dw = w.front().cols();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].rows() != t0 || w[i].rows() != t0)
      throw InputError("historical dataset: trajectory " + std::to_string(i) + " has a different length");
    if (s[i].cols() != ds || w[i].cols() != dw)
      throw InputError("historical dataset: trajectory " + std::to_string(i) + " has different dimensions");
    if (!s[i].allFinite() || !w[i].allFinite())
      throw InputError("historical dataset: trajectory " + std::to_string(i) + " has non-finite entries");
  }
}

std::pair<Matrix, Matrix> HistoricalDataset::flattened() const {
  validate();
  const Eigen::Index t0 = static_cast<Eigen::Index>(length());
  Matrix fs(static_cast<Eigen::Index>(trajectories()) * t0, static_cast<Eigen::Index>(obs_dim()));
  Matrix fw(fs.rows(), static_cast<Eigen::Index>(missing_dim()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    fs.middleRows(static_cast<Eigen::Index>(i) * t0, t0) = s[i];
    fw.middleRows(static_cast<Eigen::Index>(i) * t0, t0) = w[i];
  }
  return {std::move(fs), std::move(fw)};
}

HistoricalDataset sample_historical(const EnvironmentFactory& factory, std::size_t trajectories,
                                    std::size_t length, std::uint64_t seed) {
  if (trajectories == 0) throw ParameterError("historical dataset needs N >= 1");
  if (length == 0) throw ParameterError("historical dataset needs T0 >= 1");
  HistoricalDataset data;
  data.seed = seed;
  for (std::size_t i = 0; i < trajectories; ++i) {
    auto env = factory(trial_seed(derive_seed(seed, "historical"), i));
    const FeatureMap& map = env->feature_map();
    const auto ds = static_cast<Eigen::Index>(map.obs_dim());
    const auto dw = static_cast<Eigen::Index>(map.missing_dim());
    if (i == 0) data.env_id = env->id();
    Matrix s(static_cast<Eigen::Index>(length), ds);
    Matrix w(static_cast<Eigen::Index>(length), dw);
    for (std::size_t t = 0; t < length; ++t) {
      const EnvironmentStep st = env->step();
      s.row(static_cast<Eigen::Index>(t)) = st.observed.transpose();
      w.row(static_cast<Eigen::Index>(t)) = st.full_context.tail(dw).transpose();
    }
    data.s.push_back(std::move(s));
    data.w.push_back(std::move(w));
  }
  return data;
}

std::string to_string(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::Oracle: return "oracle";
    case ImputerKind::LinearAR: return "linear_ar";
    case ImputerKind::Kernel: return "kernel";
    case ImputerKind::Null: return "null";
    case ImputerKind::FullObserver: return "full_observer";
  }
  return "unknown";
}

ImputerKind imputer_kind_from_string(const std::string& name) {
  for (auto k : {ImputerKind::Oracle, ImputerKind::LinearAR, ImputerKind::Kernel, ImputerKind::Null,
                 ImputerKind::FullObserver}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown imputer kind '" + name + "'");
}

// ---------------------------------------------------------------------------

Imputer Imputer::null_imputer(std::size_t obs_dim, std::size_t missing_dim) {
  Imputer imp;
  imp.kind_ = ImputerKind::Null;
  imp.obs_dim_ = obs_dim;
  imp.missing_dim_ = missing_dim;
  return imp;
}

Imputer Imputer::full_observer(std::size_t obs_dim, std::size_t missing_dim) {
  Imputer imp = null_imputer(obs_dim, missing_dim);
  imp.kind_ = ImputerKind::FullObserver;
  return imp;
}

Imputer Imputer::oracle(std::shared_ptr<const ConditionalLaw> law, std::size_t obs_dim,
                        std::size_t missing_dim) {
  if (!law) throw ParameterError("oracle imputer needs the environment's conditional law");
  Imputer imp = null_imputer(obs_dim, missing_dim);
  imp.kind_ = ImputerKind::Oracle;
  imp.law_ = std::move(law);
  return imp;
}

Imputer Imputer::linear_ar(LinearArParams params, std::size_t obs_dim) {
  const auto dw = params.coefficients.rows();
  const auto expected_cols = static_cast<Eigen::Index>((params.lag + 1) * obs_dim);
  if (params.coefficients.cols() != expected_cols)
    throw ParameterError("linear AR coefficient stack must have (m+1)*d_S*d_W entries");
  if (params.intercept.size() == 0) params.intercept = Vector::Zero(dw);
  if (params.residual_sd.size() == 0) params.residual_sd = Vector::Ones(dw);
  if (params.intercept.size() != dw || params.residual_sd.size() != dw)
    throw ParameterError("linear AR intercept and residual sd must have d_W entries");
  if ((params.residual_sd.array() < 0.0).any()) throw ParameterError("residual sd must be nonnegative");
  Imputer imp = null_imputer(obs_dim, static_cast<std::size_t>(dw));
  imp.kind_ = ImputerKind::LinearAR;
  imp.ar_ = std::make_shared<const LinearArParams>(std::move(params));
  return imp;
}

Imputer Imputer::kernel(KernelParams params) {
  if (!(params.bandwidth > 0.0) || !std::isfinite(params.bandwidth))
    throw InputError("kernel bandwidth must be positive");
  if (!(params.beta > 0.0 && params.beta <= 1.0)) throw InputError("kernel smoothness beta must lie in (0,1]");
  const Eigen::Index n = params.train_s.rows();
  if (n == 0 || params.train_w.rows() != n || params.train_s.cols() == 0)
    throw InputError("kernel imputer needs matching nonempty training pairs");
  const Eigen::Index dw = params.train_w.cols();
  if (params.global_mean.size() == 0) params.global_mean = params.train_w.colwise().mean().transpose();
  if (params.residual_sd.size() == 0) params.residual_sd = Vector::Ones(dw);

  Imputer imp = null_imputer(static_cast<std::size_t>(params.train_s.cols()), static_cast<std::size_t>(dw));
  imp.kind_ = ImputerKind::Kernel;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return params.train_s(static_cast<Eigen::Index>(a), 0) < params.train_s(static_cast<Eigen::Index>(b), 0);
  });
  Vector first(n);
  Matrix prefix = Matrix::Zero(n + 1, dw);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
    first(i) = params.train_s(src, 0);
    prefix.row(i + 1) = prefix.row(i) + params.train_w.row(src);
  }
  imp.order_ = std::make_shared<const std::vector<std::size_t>>(std::move(order));
  imp.sorted_first_ = std::make_shared<const Vector>(std::move(first));
  imp.prefix_w_ = std::make_shared<const Matrix>(std::move(prefix));
  imp.empty_windows_ = std::make_shared<std::atomic<std::size_t>>(0);
  imp.kernel_ = std::make_shared<const KernelParams>(std::move(params));
  return imp;
}

void Imputer::set_mc_samples(std::size_t n) {
  if (n == 0) throw ParameterError("mc_samples must be positive");
  mc_samples_ = n;
}

const LinearArParams& Imputer::linear_ar_params() const {
  if (kind_ != ImputerKind::LinearAR) throw UsageError("not a linear AR imputer");
  return *ar_;
}

const KernelParams& Imputer::kernel_params() const {
  if (kind_ != ImputerKind::Kernel) throw UsageError("not a kernel imputer");
  return *kernel_;
}

std::vector<double> Imputer::coefficient_stack() const {
  const Matrix& b = linear_ar_params().coefficients;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(b.size()));
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.push_back(b(r, c));
  return out;
}

Vector Imputer::linear_mean(std::span<const Vector> history) const {
  const auto ds = static_cast<Eigen::Index>(obs_dim_);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(ar_->lag + 1) * ds);
  for (std::size_t j = 0; j <= ar_->lag && j < history.size(); ++j) {
    x.segment(static_cast<Eigen::Index>(j) * ds, ds) = history[history.size() - 1 - j];
  }
  return ar_->intercept + ar_->coefficients * x;
}

Vector Imputer::kernel_predict(const Vector& s) const {
  const KernelParams& kp = kernel_params();
  if (s.size() != kp.train_s.cols()) throw InputError("kernel query has the wrong dimension");
  const double half = 0.5 * kp.bandwidth;
  const Vector& first = *sorted_first_;
  const double* begin = first.data();
  const double* end = begin + first.size();
  const auto lo = static_cast<Eigen::Index>(std::lower_bound(begin, end, s(0) - half) - begin);
  const auto hi = static_cast<Eigen::Index>(std::upper_bound(begin, end, s(0) + half) - begin);

  if (kp.train_s.cols() == 1) {
    if (hi > lo) return ((prefix_w_->row(hi) - prefix_w_->row(lo)) / static_cast<double>(hi - lo)).transpose();
  } else {
    Vector acc = Vector::Zero(kp.train_w.cols());
    std::size_t count = 0;
    for (Eigen::Index i = lo; i < hi; ++i) {
      const auto src = static_cast<Eigen::Index>((*order_)[static_cast<std::size_t>(i)]);
      if (((kp.train_s.row(src).transpose() - s).array().abs() <= half).all()) {
        acc += kp.train_w.row(src).transpose();
        ++count;
      }
    }
    if (count > 0) return acc / static_cast<double>(count);
  }
  empty_windows_->fetch_add(1, std::memory_order_relaxed);
  return kp.global_mean;
}

Vector Imputer::mean(std::span<const Vector> history) const {
  if (history.empty()) throw InputError("observed history must be nonempty");
  if (history.back().size() != static_cast<Eigen::Index>(obs_dim_))
    throw InputError("observed vector has the wrong dimension");
  switch (kind_) {
    case ImputerKind::Null: return Vector::Zero(static_cast<Eigen::Index>(missing_dim_));
    case ImputerKind::FullObserver: throw UsageError("the full observer does not impute");
    case ImputerKind::LinearAR: return linear_mean(history);
    case ImputerKind::Kernel: return kernel_predict(history.back());
    case ImputerKind::Oracle: {
      const auto law = law_->conditional(history);
      Vector m(static_cast<Eigen::Index>(law.size()));
      for (std::size_t i = 0; i < law.size(); ++i) m(static_cast<Eigen::Index>(i)) = law[i].mean;
      return m;
    }
  }
  return {};
}

double Imputer::sampling_sd(std::size_t coord) const {
  if (sd_mode_ == SdMode::Unit) return 1.0;
  const auto c = static_cast<Eigen::Index>(coord);
  if (kind_ == ImputerKind::LinearAR) return ar_->residual_sd(c);
  if (kind_ == ImputerKind::Kernel) return kernel_->residual_sd(c);
  return 0.0;
}

std::vector<GaussianConditional> Imputer::conditional(std::span<const Vector> history) const {
  if (kind_ == ImputerKind::Oracle) {
    if (history.empty()) throw InputError("observed history must be nonempty");
    return law_->conditional(history);
  }
  const Vector m = mean(history);
  std::vector<GaussianConditional> out(missing_dim_);
  for (std::size_t i = 0; i < missing_dim_; ++i) {
    out[i].mean = m(static_cast<Eigen::Index>(i));
    out[i].sd = kind_ == ImputerKind::Null ? 0.0 : sampling_sd(i);
  }
  return out;
}

Vector Imputer::sample(std::span<const Vector> history, Rng& rng) const {
  const auto law = conditional(history);
  Vector w(static_cast<Eigen::Index>(law.size()));
  for (std::size_t i = 0; i < law.size(); ++i) w(static_cast<Eigen::Index>(i)) = rng.normal(law[i].mean, law[i].sd);
  return w;
}

// ---------------------------------------------------------------------------

Imputer fit_linear_ar(const HistoricalDataset& data, std::size_t lag, double ridge_eps, bool intercept) {
  data.validate();
  if (!(ridge_eps >= 0.0) || !std::isfinite(ridge_eps)) throw ParameterError("ridge_eps must be nonnegative");
  const std::size_t t0 = data.length();
  if (t0 <= lag) throw InputError("linear AR fit needs T0 > m (T0=" + std::to_string(t0) + ", m=" + std::to_string(lag) + ")");

  const auto ds = static_cast<Eigen::Index>(data.obs_dim());
  const auto dw = static_cast<Eigen::Index>(data.missing_dim());
  const Eigen::Index lagged = static_cast<Eigen::Index>(lag + 1) * ds;
  const Eigen::Index p = lagged + (intercept ? 1 : 0);

  Matrix xtx = Matrix::Zero(p, p);
  Matrix xtw = Matrix::Zero(p, dw);
  Vector x(p);
  std::size_t rows = 0;
  for (std::size_t i = 0; i < data.trajectories(); ++i) {
    const Matrix& s = data.s[i];
    const Matrix& w = data.w[i];
    for (std::size_t t = lag; t < t0; ++t) {
      for (std::size_t j = 0; j <= lag; ++j)
        x.segment(static_cast<Eigen::Index>(j) * ds, ds) = s.row(static_cast<Eigen::Index>(t - j)).transpose();
      if (intercept) x(lagged) = 1.0;
      xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
      xtw.noalias() += x * w.row(static_cast<Eigen::Index>(t));
      ++rows;
    }
  }
  xtx = xtx.selfadjointView<Eigen::Lower>();
  xtx.diagonal().array() += ridge_eps;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(xtx, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double tol = std::max(top, 1.0) * static_cast<double>(p) * 1e-13;
  const auto rank = (eig.eigenvalues().array() > tol).count();
  if (rank < p) {
    throw FitError("linear AR normal equations are rank deficient (rank " + std::to_string(rank) + " < " +
                   std::to_string(p) + "); set ridge_eps > 0 or supply more varied data");
  }
  const Eigen::LLT<Matrix> llt(xtx);
  if (llt.info() != Eigen::Success) throw FitError("linear AR normal equations are not positive definite");
  const Matrix coef = llt.solve(xtw);  // p × d_W

  LinearArParams params;
  params.lag = lag;
  params.coefficients = coef.topRows(lagged).transpose();
  params.intercept = intercept ? Vector(coef.row(lagged).transpose()) : Vector::Zero(dw);

  Vector rss = Vector::Zero(dw);
  for (std::size_t i = 0; i < data.trajectories(); ++i) {
    const Matrix& s = data.s[i];
    const Matrix& w = data.w[i];
    for (std::size_t t = lag; t < t0; ++t) {
      Vector xl(lagged);
      for (std::size_t j = 0; j <= lag; ++j)
        xl.segment(static_cast<Eigen::Index>(j) * ds, ds) = s.row(static_cast<Eigen::Index>(t - j)).transpose();
      const Vector r = w.row(static_cast<Eigen::Index>(t)).transpose() - params.intercept - params.coefficients * xl;
      rss += r.cwiseAbs2();
    }
  }
  const double dof = rows > static_cast<std::size_t>(p) ? static_cast<double>(rows - static_cast<std::size_t>(p))
                                                        : static_cast<double>(rows);
  params.residual_sd = (rss / dof).cwiseSqrt();
  return Imputer::linear_ar(std::move(params), data.obs_dim());
}

double default_kernel_bandwidth(std::size_t n, double beta, std::size_t obs_dim) {
  if (n == 0) throw ParameterError("bandwidth rule needs n >= 1");
  return std::pow(static_cast<double>(n), -1.0 / (2.0 * beta + static_cast<double>(obs_dim)));
}

Imputer fit_kernel(const HistoricalDataset& data, double bandwidth, double beta) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InputError("kernel bandwidth must be positive");
  auto [s, w] = data.flattened();
  KernelParams params;
  params.bandwidth = bandwidth;
  params.beta = beta;
  params.train_s = std::move(s);
  params.train_w = std::move(w);
  Imputer provisional = Imputer::kernel(params);

  const Matrix& ts = provisional.kernel_params().train_s;
  const Matrix& tw = provisional.kernel_params().train_w;
  Vector rss = Vector::Zero(tw.cols());
  for (Eigen::Index i = 0; i < ts.rows(); ++i) {
    rss += (tw.row(i).transpose() - provisional.kernel_predict(ts.row(i).transpose())).cwiseAbs2();
  }
  params.residual_sd = (rss / static_cast<double>(ts.rows())).cwiseSqrt();
  return Imputer::kernel(std::move(params));
}

// ---------------------------------------------------------------------------

namespace {

void check_usable(const Imputer& imputer, const FeatureMap& map, std::span<const Vector> history) {
  if (imputer.kind() == ImputerKind::FullObserver)
    throw UsageError("the full observer sees W directly and has no imputed features");
  if (history.empty()) throw InputError("observed history must be nonempty");
  if (imputer.obs_dim() != map.obs_dim() || imputer.missing_dim() != map.missing_dim())
    throw InputError("imputer and feature map dimensions disagree");
}

bool use_analytic(const Imputer& imputer, const FeatureMap& map) {
  return imputer.kind() == ImputerKind::Null || (imputer.analytic() && map.affine_in_missing());
}

}  // namespace

Matrix expected_feature_matrix(const Imputer& imputer, const FeatureMap& map, std::span<const Vector> history,
                               Rng& rng) {
  check_usable(imputer, map, history);
  const Vector& s = history.back();
  if (use_analytic(imputer, map)) return map.arm_feature_matrix(map.assemble(s, imputer.mean(history)), s);

  const std::size_t b = imputer.mc_samples();
  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(map.arm_count()), static_cast<Eigen::Index>(map.output_dim()));
  for (std::size_t k = 0; k < b; ++k) {
    acc += map.arm_feature_matrix(map.assemble(s, imputer.sample(history, rng)), s);
  }
  return acc / static_cast<double>(b);
}

ImputedFeatures expected_features(const Imputer& imputer, const FeatureMap& map, std::span<const Vector> history,
                                  std::size_t arm, Rng& rng) {
  check_usable(imputer, map, history);
  if (arm >= map.arm_count()) throw InputError("arm index out of range");
  const Vector& s = history.back();
  ImputedFeatures out;
  const auto d = static_cast<Eigen::Index>(map.output_dim());
  if (use_analytic(imputer, map)) {
    out.phi = map.phi(map.assemble(s, imputer.mean(history)), s, arm);
    out.analytic = true;
    out.std_error = Vector::Zero(d);
    return out;
  }
  const std::size_t b = imputer.mc_samples();
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  for (std::size_t k = 0; k < b; ++k) {
    const Vector f = map.phi(map.assemble(s, imputer.sample(history, rng)), s, arm);
    sum += f;
    sum_sq += f.cwiseAbs2();
  }
  const double n = static_cast<double>(b);
  out.phi = sum / n;
  out.samples = b;
  if (b > 1) {
    const Vector var = ((sum_sq - n * out.phi.cwiseAbs2()) / (n - 1.0)).cwiseMax(0.0);
    out.std_error = (var / n).cwiseSqrt();
  } else {
    out.std_error = Vector::Zero(d);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::int64_t kFormatVersion = 1;
constexpr const char* kEndMarker = "imputer";

std::vector<double> flat(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

std::vector<double> flat(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix unflat(const TextDocument& doc, const std::string& key, Eigen::Index rows, Eigen::Index cols) {
  const auto values = doc.get_doubles(key);
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw LoadError(key, "expected " + std::to_string(rows * cols) + " values, found " + std::to_string(values.size()));
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Vector unflat_vec(const TextDocument& doc, const std::string& key, Eigen::Index n) {
  return unflat(doc, key, n, 1).col(0);
}

std::size_t positive_count(const TextDocument& doc, const std::string& key, bool allow_zero = false) {
  const auto v = doc.get_int(key);
  if (v < 0 || (!allow_zero && v == 0)) throw LoadError(key, "must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_imputer(const Imputer& imputer, const std::string& path) {
  if (imputer.kind() == ImputerKind::Oracle)
    throw UsageError("the oracle imputer wraps a live environment law and cannot be saved");
  TextDocument doc;
  doc.set("format_version", kFormatVersion);
  doc.set("kind", to_string(imputer.kind()));
  doc.set("d_S", static_cast<std::int64_t>(imputer.obs_dim()));
  doc.set("d_W", static_cast<std::int64_t>(imputer.missing_dim()));
  doc.set("mc_samples", static_cast<std::int64_t>(imputer.mc_samples()));
  doc.set("analytic", std::string(imputer.analytic() ? "true" : "false"));
  doc.set("sd_mode", std::string(imputer.sd_mode() == SdMode::Unit ? "unit" : "estimated"));
  if (imputer.kind() == ImputerKind::LinearAR) {
    const auto& p = imputer.linear_ar_params();
    doc.set("lag", static_cast<std::int64_t>(p.lag));
    doc.set("intercept", flat(p.intercept));
    doc.set("coefficients", flat(p.coefficients));
    doc.set("residual_sd", flat(p.residual_sd));
  } else if (imputer.kind() == ImputerKind::Kernel) {
    const auto& p = imputer.kernel_params();
    doc.set("bandwidth", p.bandwidth);
    doc.set("beta", p.beta);
    doc.set("pairs", static_cast<std::int64_t>(p.train_s.rows()));
    doc.set("train_s", flat(p.train_s));
    doc.set("train_w", flat(p.train_w));
    doc.set("global_mean", flat(p.global_mean));
    doc.set("residual_sd", flat(p.residual_sd));
  }
  doc.set("end", std::string(kEndMarker));
  doc.save(path);
}

Imputer load_imputer(const std::string& path) {
  const TextDocument doc = TextDocument::load(path);
  const auto version = doc.get_int("format_version");
  if (version != kFormatVersion)
    throw LoadError("format_version", "unsupported version " + std::to_string(version));
  ImputerKind kind;
  try {
    kind = imputer_kind_from_string(doc.get("kind"));
  } catch (const ParameterError& e) {
    throw LoadError("kind", e.what());
  }
  const std::size_t ds = positive_count(doc, "d_S", true);
  const std::size_t dw = positive_count(doc, "d_W", true);
  const std::size_t mc = positive_count(doc, "mc_samples");
  const std::string analytic = doc.get("analytic");
  if (analytic != "true" && analytic != "false") throw LoadError("analytic", "expected true or false");
  const std::string sd_mode = doc.get("sd_mode");
  if (sd_mode != "unit" && sd_mode != "estimated") throw LoadError("sd_mode", "expected unit or estimated");

  Imputer imp = Imputer::null_imputer(ds, dw);
  const auto eds = static_cast<Eigen::Index>(ds);
  const auto edw = static_cast<Eigen::Index>(dw);
  switch (kind) {
    case ImputerKind::Null: break;
    case ImputerKind::FullObserver: imp = Imputer::full_observer(ds, dw); break;
    case ImputerKind::Oracle: throw LoadError("kind", "oracle imputers are not persistable");
    case ImputerKind::LinearAR: {
      LinearArParams p;
      p.lag = positive_count(doc, "lag", true);
      p.intercept = unflat_vec(doc, "intercept", edw);
      p.coefficients = unflat(doc, "coefficients", edw, static_cast<Eigen::Index>(p.lag + 1) * eds);
      p.residual_sd = unflat_vec(doc, "residual_sd", edw);
      imp = Imputer::linear_ar(std::move(p), ds);
      break;
    }
    case ImputerKind::Kernel: {
      KernelParams p;
      p.bandwidth = doc.get_double("bandwidth");
      p.beta = doc.get_double("beta");
      const auto n = static_cast<Eigen::Index>(positive_count(doc, "pairs"));
      p.train_s = unflat(doc, "train_s", n, eds);
      p.train_w = unflat(doc, "train_w", n, edw);
      p.global_mean = unflat_vec(doc, "global_mean", edw);
      p.residual_sd = unflat_vec(doc, "residual_sd", edw);
      try {
        imp = Imputer::kernel(std::move(p));
      } catch (const Error& e) {
        throw LoadError("bandwidth", e.what());
      }
      break;
    }
  }
  if (doc.get("end") != kEndMarker) throw LoadError("end", "document is truncated");
  imp.set_mc_samples(mc);
  imp.set_analytic(analytic == "true");
  imp.set_sd_mode(sd_mode == "unit" ? SdMode::Unit : SdMode::Estimated);
  return imp;
}

}  // namespace pulse
