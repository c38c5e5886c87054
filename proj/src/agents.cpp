#include "pulse/agents.hpp"

#include <cmath>

#include "pulse/error.hpp"

namespace pulse {

std::string to_string(DtSource s) {
  switch (s) {
    case DtSource::Oracle: return "oracle";
    case DtSource::PlugIn: return "plug_in";
    case DtSource::Constant: return "constant";
    case DtSource::Zero: return "zero";
  }
  return "unknown";
}

std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::PulseUcb: return "pulse_ucb";
    case AgentKind::OfulObserved: return "oful_observed";
    case AgentKind::OfulFull: return "oful_full";
    case AgentKind::OracleBest: return "oracle_best";
    case AgentKind::UniformRandom: return "uniform_random";
  }
  return "unknown";
}

std::string to_string(SelectionForm f) {
  return f == SelectionForm::ClosedForm ? "closed_form" : "ball_maximization";
}

DtSource dt_source_from_string(const std::string& s) {
  for (auto v : {DtSource::Oracle, DtSource::PlugIn, DtSource::Constant, DtSource::Zero})
    if (to_string(v) == s) return v;
  throw ParameterError("unknown dt source '" + s + "'");
}

AgentKind agent_kind_from_string(const std::string& s) {
  for (auto v : {AgentKind::PulseUcb, AgentKind::OfulObserved, AgentKind::OfulFull, AgentKind::OracleBest,
                 AgentKind::UniformRandom})
    if (to_string(v) == s) return v;
  throw ParameterError("unknown agent kind '" + s + "'");
}

SelectionForm selection_form_from_string(const std::string& s) {
  for (auto v : {SelectionForm::ClosedForm, SelectionForm::BallMaximization})
    if (to_string(v) == s) return v;
  throw ParameterError("unknown selection form '" + s + "'");
}

void GammaConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be positive");
  if (!(sigma_eta >= 0.0)) throw ConfigError("sigma_eta", "must be nonnegative");
  if (!(sigma_eps >= 0.0)) throw ConfigError("sigma_eps", "must be nonnegative");
  // δ = 1 is admitted: the bound degenerates but the formula stays finite.
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta", "must lie in (0, 1]");
  if (!(feat_norm_bound >= 0.0) || !std::isfinite(feat_norm_bound))
    throw ConfigError("feat_norm_bound", "must be nonnegative");
  if (dim == 0) throw ConfigError("dim", "must be positive");
  if (!(dt_constant >= 0.0)) throw ConfigError("dt_constant", "must be nonnegative");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ConfigError("gamma_scale", "must be nonnegative");
}

GammaSchedule::GammaSchedule(GammaConfig config) : config_(config) { config_.validate(); }

double GammaSchedule::gamma0(std::size_t t) const {
  const double tt = static_cast<double>(t == 0 ? 1 : t);
  const double d = static_cast<double>(config_.dim);
  const double b2 = config_.feat_norm_bound * config_.feat_norm_bound;
  const double log_term = std::log(4.0) + 2.0 * std::log(tt) - std::log(config_.delta) +
                          d * std::log1p(tt * b2 / (d * config_.lambda));
  const double s = config_.sigma_eta + config_.sigma_eps;
  return 3.0 * config_.lambda + 6.0 * s * s * log_term;
}

double GammaSchedule::gamma_at(std::size_t t) const {
  const double d = static_cast<double>(config_.dim);
  return config_.scale * (gamma0(t) + 3.0 * d * d * dt_cumsum_);
}

double GammaSchedule::alpha_at(std::size_t t) const { return std::sqrt(gamma_at(t)); }

void GammaSchedule::record(std::optional<double> dt) {
  switch (config_.dt_source) {
    case DtSource::Zero: return;
    case DtSource::Constant: dt_cumsum_ += config_.dt_constant; return;
    case DtSource::Oracle:
    case DtSource::PlugIn:
      if (!dt) throw UsageError("dt source '" + to_string(config_.dt_source) + "' needs a D_t value each round");
      if (!(*dt >= 0.0) || !std::isfinite(*dt)) throw InputError("D_t must be finite and nonnegative");
      dt_cumsum_ += *dt;
      return;
  }
}

// ---------------------------------------------------------------------------

Agent::Agent(AgentConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      ridge_(config_.gamma.dim, config_.gamma.lambda),
      schedule_(config_.gamma),
      rng_(derive_seed(seed, "agent-" + to_string(config_.kind))) {
  if (config_.label.empty()) config_.label = to_string(config_.kind);
}

bool Agent::uses_ucb() const {
  return config_.kind == AgentKind::PulseUcb || config_.kind == AgentKind::OfulObserved ||
         config_.kind == AgentKind::OfulFull;
}

double Agent::current_gamma() const { return schedule_.gamma_at(ridge_.update_count()); }

void Agent::check_features(const Matrix& f) const {
  if (f.rows() == 0) throw InputError("agent: empty arm set");
  if (static_cast<std::size_t>(f.cols()) != ridge_.dim())
    throw InputError("agent: feature dimension " + std::to_string(f.cols()) + " differs from d = " +
                     std::to_string(ridge_.dim()));
  if (!f.allFinite()) throw InputError("agent: non-finite arm features");
}

Vector Agent::ucb_scores(const Matrix& f) const {
  check_features(f);
  const double root_gamma = std::sqrt(current_gamma());
  Vector out(f.rows());
  for (Eigen::Index a = 0; a < f.rows(); ++a) {
    const Vector phi = f.row(a).transpose();
    out(a) = ridge_.theta_hat().dot(phi) + root_gamma * std::sqrt(ridge_.quadratic_form_inv(phi));
  }
  return out;
}

Vector Agent::ball_scores(const Matrix& f) const {
  check_features(f);
  const double root_gamma = std::sqrt(current_gamma());
  Vector out(f.rows());
  for (Eigen::Index a = 0; a < f.rows(); ++a) {
    const Vector phi = f.row(a).transpose();
    const Vector sinv_phi = ridge_.solve(phi);
    const double norm = std::sqrt(std::max(phi.dot(sinv_phi), 0.0));
    Vector theta = ridge_.theta_hat();
    if (norm > 0.0) theta += (root_gamma / norm) * sinv_phi;
    out(a) = theta.dot(phi);
  }
  return out;
}

namespace {

std::size_t first_argmax(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

}  // namespace

std::size_t Agent::select(const Matrix& f, std::optional<std::size_t> oracle_arm) {
  switch (config_.kind) {
    case AgentKind::UniformRandom:
      if (f.rows() == 0) throw InputError("agent: empty arm set");
      return rng_.index(static_cast<std::size_t>(f.rows()));
    case AgentKind::OracleBest:
      if (!oracle_arm) throw UsageError("oracle agent needs the optimal arm from the harness");
      if (*oracle_arm >= static_cast<std::size_t>(f.rows())) throw InputError("oracle arm out of range");
      return *oracle_arm;
    default: break;
  }
  const Vector closed = ucb_scores(f);
  if (config_.form == SelectionForm::ClosedForm) return first_argmax(closed);

  const Vector ball = ball_scores(f);
  for (Eigen::Index a = 0; a < f.rows(); ++a) {
    if (std::abs(ball(a) - closed(a)) > 1e-9 * (1.0 + std::abs(closed(a))))
      throw ConsistencyError("ball maximizer disagrees with the closed-form bound on arm " + std::to_string(a));
  }
  return first_argmax(ball);
}

void Agent::observe(const Vector& chosen, double reward, std::optional<double> dt) {
  if (!std::isfinite(reward)) throw InputError("agent: non-finite reward");
  ridge_.rank_one_update(chosen, reward);
  if (config_.kind == AgentKind::PulseUcb) schedule_.record(dt);
}

bool Agent::theta_in_ball(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != ridge_.dim()) throw InputError("theta has the wrong dimension");
  const Vector diff = ridge_.theta_hat() - theta;
  return diff.dot(ridge_.gram() * diff) <= current_gamma();
}

}  // namespace pulse
