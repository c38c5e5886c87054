#include "pulse/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pulse/error.hpp"
#include "pulse/rng.hpp"

namespace pulse {

std::string to_string(EnvKind k) {
  switch (k) {
    case EnvKind::Synthetic: return "synthetic";
    case EnvKind::LowerBound: return "lower_bound";
    case EnvKind::Replay: return "replay";
  }
  return "unknown";
}

namespace {

EnvKind env_kind_from_string(const std::string& s, const std::string& path) {
  for (auto k : {EnvKind::Synthetic, EnvKind::LowerBound, EnvKind::Replay})
    if (to_string(k) == s) return k;
  throw ConfigError(path, "unknown environment kind '" + s + "'");
}

/// Walks one JSON object, records which keys were consumed and rejects the rest.
class Section {
 public:
  Section(const Json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  Section child(const std::string& key) { return Section(find(key), at(key)); }

  template <class T>
  void read(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return;
    out = convert<T>(*v, at(key));
  }

  template <class T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    const Json* v = find(key);
    if (!v) return;
    if (v->is_string() && v->get<std::string>() == "auto") {
      out.reset();
      return;
    }
    out = convert<T>(*v, at(key));
  }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }
  }

  template <class T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      return v.get<int>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
      if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(path, "must be nonnegative");
        return static_cast<T>(v.get<std::int64_t>());
      }
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d < 0) throw ConfigError(path, "must be nonnegative");
        if (d == static_cast<double>(static_cast<std::uint64_t>(d))) return static_cast<T>(d);
      }
      throw ConfigError(path, "expected a nonnegative integer");
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

 private:
  const Json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vector read_vector(Section& s, const std::string& key, const Vector& def, std::size_t expected) {
  const Json* v = s.find(key);
  if (!v) return def;
  if (!v->is_array()) throw ConfigError(s.at(key), "expected an array of numbers");
  if (expected && v->size() != expected)
    throw ConfigError(s.at(key), "expected " + std::to_string(expected) + " entries");
  Vector out(static_cast<Eigen::Index>(v->size()));
  for (std::size_t i = 0; i < v->size(); ++i) out(static_cast<Eigen::Index>(i)) = Section::convert<double>((*v)[i], s.at(key));
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

template <class E, class F>
E read_enum(Section& s, const std::string& key, E def, F parse) {
  const Json* v = s.find(key);
  if (!v) return def;
  const std::string name = Section::convert<std::string>(*v, s.at(key));
  try {
    return parse(name);
  } catch (const ParameterError& e) {
    throw ConfigError(s.at(key), e.what());
  }
}

}  // namespace

std::vector<AgentSpec> default_agents() {
  return {{AgentKind::PulseUcb, "pulse_ucb", SelectionForm::ClosedForm},
          {AgentKind::OfulObserved, "oful_observed", SelectionForm::ClosedForm},
          {AgentKind::OfulFull, "oful_full", SelectionForm::ClosedForm}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  ExperimentConfig c;
  Section root(&j, "");
  root.read("schema_version", c.schema_version);
  if (!j.contains("schema_version")) throw ConfigError("schema_version", "missing (mandatory)");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  root.read("name", c.name);
  root.find("metadata");

  {
    Section s = root.child("experiment");
    s.read("horizon", c.experiment.horizon);
    s.read("trials", c.experiment.trials);
    s.read("base_seed", c.experiment.base_seed);
    s.read("threads", c.experiment.threads);
    s.read("conditional_regret", c.experiment.conditional_regret);
    s.finish();
  }
  {
    Section s = root.child("environment");
    c.environment.kind = read_enum(s, "kind", EnvKind::Synthetic,
                                   [&](const std::string& n) { return env_kind_from_string(n, s.at("kind")); });
    {
      Section y = s.child("synthetic");
      auto& e = c.environment.synthetic;
      const Vector ar = read_vector(y, "ar", (Vector(2) << e.ar1, e.ar2).finished(), 2);
      const Vector ma = read_vector(y, "ma", (Vector(2) << e.ma1, e.ma2).finished(), 2);
      e.ar1 = ar(0);
      e.ar2 = ar(1);
      e.ma1 = ma(0);
      e.ma2 = ma(1);
      y.read("innovation_sd", e.innovation_sd);
      std::string model = e.w_model == WModel::Linear ? "linear" : "nonlinear";
      y.read("w_model", model);
      if (model == "linear") e.w_model = WModel::Linear;
      else if (model == "nonlinear") e.w_model = WModel::Nonlinear;
      else throw ConfigError(y.at("w_model"), "expected 'linear' or 'nonlinear'");
      y.read("rho", e.rho);
      e.beta_star = read_vector(y, "beta_star", e.beta_star, 2);
      e.theta_star = read_vector(y, "theta_star", e.theta_star, 4);
      y.read("xi_sd", e.xi_sd);
      y.read("eta_sd", e.eta_sd);
      y.read("lag_window", e.lag_window);
      y.read("burn_in", e.burn_in);
      y.finish();
    }
    {
      Section l = s.child("lower_bound");
      auto& e = c.environment.lower_bound;
      l.read("lin_dim", e.lin_dim);
      l.read("non_dim", e.non_dim);
      l.read("horizon", e.horizon);
      l.read("bins_per_dim", e.bins_per_dim);
      l.read("beta", e.beta);
      l.read("lipschitz", e.lipschitz);
      l.read("fill_fraction", e.fill_fraction);
      l.read("sign_seed", e.sign_seed);
      l.read("reward_sd", e.reward_sd);
      l.read("w_noise_sd", e.w_noise_sd);
      if (const Json* v = l.find("theta_signs")) {
        if (!v->is_array()) throw ConfigError(l.at("theta_signs"), "expected an array of +1/-1");
        e.theta_signs.clear();
        for (const auto& x : *v) {
          const int sign = Section::convert<int>(x, l.at("theta_signs"));
          if (sign != 1 && sign != -1) throw ConfigError(l.at("theta_signs"), "entries must be +1 or -1");
          e.theta_signs.push_back(sign);
        }
      }
      l.finish();
    }
    s.finish();
  }
  {
    Section s = root.child("pretrain");
    s.read("trajectories", c.pretrain.trajectories);
    s.read("length", c.pretrain.length);
    s.read("seed", c.pretrain.seed);
    s.read("save_path", c.pretrain.save_path);
    s.finish();
  }
  {
    Section s = root.child("imputer");
    auto& m = c.imputer;
    m.kind = read_enum(s, "kind", m.kind, imputer_kind_from_string);
    s.read("lag", m.lag);
    s.read("ridge_eps", m.ridge_eps);
    s.read("intercept", m.intercept);
    s.read("bandwidth", m.bandwidth);
    s.read("beta", m.beta);
    s.read("mc_samples", m.mc_samples);
    s.read("analytic", m.analytic);
    std::string sd = m.sd_mode == SdMode::Unit ? "unit" : "estimated";
    s.read("sd_mode", sd);
    if (sd == "unit") m.sd_mode = SdMode::Unit;
    else if (sd == "estimated") m.sd_mode = SdMode::Estimated;
    else throw ConfigError(s.at("sd_mode"), "expected 'unit' or 'estimated'");
    s.read("load_path", m.load_path);
    s.finish();
  }
  if (const Json* a = root.find("agents")) {
    if (!a->is_array()) throw ConfigError("agents", "expected an array of agent objects");
    for (std::size_t i = 0; i < a->size(); ++i) {
      Section s(&(*a)[i], "agents[" + std::to_string(i) + "]");
      AgentSpec spec;
      if (!(*a)[i].contains("kind")) throw ConfigError(s.at("kind"), "missing");
      spec.kind = read_enum(s, "kind", spec.kind, agent_kind_from_string);
      spec.label = to_string(spec.kind);
      s.read("label", spec.label);
      spec.form = read_enum(s, "selection", spec.form, selection_form_from_string);
      s.finish();
      c.agents.push_back(spec);
    }
  } else {
    c.agents = default_agents();
  }
  {
    Section s = root.child("gamma");
    auto& g = c.gamma;
    s.read("lambda", g.lambda);
    s.read_optional("sigma_eta", g.sigma_eta);
    s.read("sigma_eps", g.sigma_eps);
    s.read("delta", g.delta);
    s.read_optional("feat_norm_bound", g.feat_norm_bound);
    s.read("scale", g.scale);
    g.dt_source = read_enum(s, "dt_source", g.dt_source, dt_source_from_string);
    s.read("dt_constant", g.dt_constant);
    s.read("norm_dry_run_steps", g.norm_dry_run_steps);
    s.read("norm_percentile", g.norm_percentile);
    s.finish();
  }
  {
    Section s = root.child("calibration");
    s.read("alpha", c.calibration.alpha);
    s.read("bootstrap_draws", c.calibration.bootstrap_draws);
    s.read("split_seed", c.calibration.split_seed);
    s.read("bandwidth", c.calibration.bandwidth);
    s.finish();
  }
  {
    Section s = root.child("replay");
    auto& r = c.replay;
    s.read("log_path", r.log_path);
    s.read("k", r.k);
    s.read("pretrain_fraction", r.pretrain_fraction);
    s.read("seeds", r.seeds);
    Section g = s.child("generate");
    g.read("rows", r.generate.rows);
    g.read("obs_dim", r.generate.obs_dim);
    g.read("missing_dim", r.generate.missing_dim);
    g.read("pools", r.generate.pools);
    g.read("base_logit", r.generate.base_logit);
    g.read("missing_weight", r.generate.missing_weight);
    g.read("observed_weight", r.generate.observed_weight);
    g.read("missing_noise_sd", r.generate.missing_noise_sd);
    g.read("seed", r.generate.seed);
    g.finish();
    s.finish();
  }
  {
    Section s = root.child("output");
    s.read("dir", c.output_dir);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["schema_version"] = schema_version;
  j["name"] = name;
  j["experiment"] = {{"horizon", experiment.horizon},
                     {"trials", experiment.trials},
                     {"base_seed", experiment.base_seed},
                     {"threads", experiment.threads},
                     {"conditional_regret", experiment.conditional_regret}};
  const auto& y = environment.synthetic;
  const auto& l = environment.lower_bound;
  j["environment"] = {
      {"kind", to_string(environment.kind)},
      {"synthetic",
       {{"ar", {y.ar1, y.ar2}},
        {"ma", {y.ma1, y.ma2}},
        {"innovation_sd", y.innovation_sd},
        {"w_model", y.w_model == WModel::Linear ? "linear" : "nonlinear"},
        {"rho", y.rho},
        {"beta_star", to_std(y.beta_star)},
        {"theta_star", to_std(y.theta_star)},
        {"xi_sd", y.xi_sd},
        {"eta_sd", y.eta_sd},
        {"lag_window", y.lag_window},
        {"burn_in", y.burn_in}}},
      {"lower_bound",
       {{"lin_dim", l.lin_dim},
        {"non_dim", l.non_dim},
        {"horizon", l.horizon},
        {"bins_per_dim", l.bins_per_dim},
        {"beta", l.beta},
        {"lipschitz", l.lipschitz},
        {"fill_fraction", l.fill_fraction},
        {"sign_seed", l.sign_seed},
        {"reward_sd", l.reward_sd},
        {"w_noise_sd", l.w_noise_sd},
        {"theta_signs", l.theta_signs}}}};
  j["pretrain"] = {{"trajectories", pretrain.trajectories},
                   {"length", pretrain.length},
                   {"seed", pretrain.seed},
                   {"save_path", pretrain.save_path}};
  j["imputer"] = {{"kind", to_string(imputer.kind)},
                  {"lag", imputer.lag},
                  {"ridge_eps", imputer.ridge_eps},
                  {"intercept", imputer.intercept},
                  {"bandwidth", imputer.bandwidth},
                  {"beta", imputer.beta},
                  {"mc_samples", imputer.mc_samples},
                  {"analytic", imputer.analytic},
                  {"sd_mode", imputer.sd_mode == SdMode::Unit ? "unit" : "estimated"},
                  {"load_path", imputer.load_path}};
  j["agents"] = Json::array();
  for (const auto& a : agents)
    j["agents"].push_back({{"kind", to_string(a.kind)}, {"label", a.label}, {"selection", to_string(a.form)}});
  j["gamma"] = {{"lambda", gamma.lambda},
                {"sigma_eta", gamma.sigma_eta ? Json(*gamma.sigma_eta) : Json("auto")},
                {"sigma_eps", gamma.sigma_eps},
                {"delta", gamma.delta},
                {"feat_norm_bound", gamma.feat_norm_bound ? Json(*gamma.feat_norm_bound) : Json("auto")},
                {"scale", gamma.scale},
                {"dt_source", to_string(gamma.dt_source)},
                {"dt_constant", gamma.dt_constant},
                {"norm_dry_run_steps", gamma.norm_dry_run_steps},
                {"norm_percentile", gamma.norm_percentile}};
  j["calibration"] = {{"alpha", calibration.alpha},
                      {"bootstrap_draws", calibration.bootstrap_draws},
                      {"split_seed", calibration.split_seed},
                      {"bandwidth", calibration.bandwidth}};
  const auto& g = replay.generate;
  j["replay"] = {{"log_path", replay.log_path},
                 {"k", replay.k},
                 {"pretrain_fraction", replay.pretrain_fraction},
                 {"seeds", replay.seeds},
                 {"generate",
                  {{"rows", g.rows},
                   {"obs_dim", g.obs_dim},
                   {"missing_dim", g.missing_dim},
                   {"pools", g.pools},
                   {"base_logit", g.base_logit},
                   {"missing_weight", g.missing_weight},
                   {"observed_weight", g.observed_weight},
                   {"missing_noise_sd", g.missing_noise_sd},
                   {"seed", g.seed}}}};
  j["output"] = {{"dir", output_dir}};
  return j;
}

void ExperimentConfig::validate() const {
  if (experiment.trials < 1) throw ConfigError("experiment.trials", "must be at least 1");
  if (experiment.horizon < 1) throw ConfigError("experiment.horizon", "must be at least 1");
  if (pretrain.trajectories < 1) throw ConfigError("pretrain.trajectories", "must be at least 1");
  if (pretrain.length < 1) throw ConfigError("pretrain.length", "must be at least 1");
  if (imputer.mc_samples < 1) throw ConfigError("imputer.mc_samples", "must be at least 1");
  if (imputer.ridge_eps < 0) throw ConfigError("imputer.ridge_eps", "must be nonnegative");
  if (imputer.bandwidth < 0) throw ConfigError("imputer.bandwidth", "must be nonnegative (0 selects the default)");
  if (!(imputer.beta > 0 && imputer.beta <= 1)) throw ConfigError("imputer.beta", "must lie in (0, 1]");
  if (imputer.kind == ImputerKind::LinearAR && imputer.load_path.empty() && imputer.lag >= pretrain.length &&
      environment.kind != EnvKind::Replay)
    throw ConfigError("imputer.lag", "must be smaller than pretrain.length");
  if (agents.empty()) throw ConfigError("agents", "at least one agent is required");
  std::set<std::string> labels;
  bool has_pulse = false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].label.empty()) throw ConfigError("agents[" + std::to_string(i) + "].label", "must be nonempty");
    if (agents[i].label.find_first_of(",\"\n") != std::string::npos)
      throw ConfigError("agents[" + std::to_string(i) + "].label", "must not contain commas, quotes or newlines");
    if (!labels.insert(agents[i].label).second)
      throw ConfigError("agents[" + std::to_string(i) + "].label", "duplicate label '" + agents[i].label + "'");
    has_pulse |= agents[i].kind == AgentKind::PulseUcb;
  }
  if (has_pulse && imputer.kind == ImputerKind::FullObserver)
    throw ConfigError("imputer.kind", "pulse_ucb needs an imputer; full_observer bypasses imputation");

  GammaConfig probe;
  probe.lambda = gamma.lambda;
  probe.sigma_eta = gamma.sigma_eta.value_or(0.0);
  probe.sigma_eps = gamma.sigma_eps;
  probe.delta = gamma.delta;
  probe.feat_norm_bound = gamma.feat_norm_bound.value_or(1.0);
  probe.dt_constant = gamma.dt_constant;
  probe.scale = gamma.scale;
  try {
    probe.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("gamma." + e.field(), e.what());
  }
  if (gamma.sigma_eta && *gamma.sigma_eta < 0) throw ConfigError("gamma.sigma_eta", "must be nonnegative");
  if (!(gamma.norm_percentile > 0 && gamma.norm_percentile <= 100))
    throw ConfigError("gamma.norm_percentile", "must lie in (0, 100]");
  if (!gamma.feat_norm_bound && gamma.norm_dry_run_steps < 1)
    throw ConfigError("gamma.norm_dry_run_steps", "must be positive when feat_norm_bound is auto");

  const bool has_law = (environment.kind == EnvKind::Synthetic && environment.synthetic.xi_sd > 0) ||
                       (environment.kind == EnvKind::LowerBound && environment.lower_bound.w_noise_sd > 0);
  if (has_pulse && gamma.dt_source == DtSource::Oracle && !has_law)
    throw ConfigError("gamma.dt_source",
                      "oracle D_t needs an environment with a Gaussian conditional law (positive W noise)");
  if (imputer.kind == ImputerKind::Oracle && !has_law)
    throw ConfigError("imputer.kind", "the oracle imputer needs an environment with a stated conditional law");
  if (environment.kind == EnvKind::Replay) {
    if (has_pulse && gamma.dt_source != DtSource::Zero && gamma.dt_source != DtSource::Constant)
      throw ConfigError("gamma.dt_source", "replay supports only 'zero' or 'constant'");
    if (imputer.kind == ImputerKind::Oracle) throw ConfigError("imputer.kind", "replay logs have no oracle law");
    if (replay.k < 1) throw ConfigError("replay.k", "must be at least 1");
    if (replay.seeds < 1) throw ConfigError("replay.seeds", "must be at least 1");
    if (!(replay.pretrain_fraction > 0 && replay.pretrain_fraction < 1))
      throw ConfigError("replay.pretrain_fraction", "must lie in (0, 1)");
    for (const auto& a : agents)
      if (a.kind == AgentKind::OracleBest) throw ConfigError("agents", "oracle_best is undefined for replay");
  }
  try {
    if (environment.kind == EnvKind::Synthetic) environment.synthetic.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("environment.synthetic", e.what());
  }
  const auto& l = environment.lower_bound;
  if (environment.kind == EnvKind::LowerBound) {
    if (l.lin_dim < 1) throw ConfigError("environment.lower_bound.lin_dim", "must be at least 1");
    if (l.non_dim < 1) throw ConfigError("environment.lower_bound.non_dim", "must be at least 1");
    if (!l.theta_signs.empty() && l.theta_signs.size() != l.lin_dim)
      throw ConfigError("environment.lower_bound.theta_signs", "needs lin_dim entries");
    if (!(l.beta > 0 && l.beta <= 1)) throw ConfigError("environment.lower_bound.beta", "must lie in (0, 1]");
    if (!(l.fill_fraction > 0 && l.fill_fraction <= 1))
      throw ConfigError("environment.lower_bound.fill_fraction", "must lie in (0, 1]");
    if (l.bins_per_dim < 1) throw ConfigError("environment.lower_bound.bins_per_dim", "must be at least 1");
    if (!(l.lipschitz > 0)) throw ConfigError("environment.lower_bound.lipschitz", "must be positive");
  }
  if (!(calibration.alpha > 0 && calibration.alpha < 1)) throw ConfigError("calibration.alpha", "must lie in (0, 1)");
  if (calibration.bootstrap_draws < 10) throw ConfigError("calibration.bootstrap_draws", "must be at least 10");
}

std::string ExperimentConfig::hash() const {
  Json hashed = to_json();
  hashed.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(hashed.dump())));
  return buf;
}

Json apply_overrides(Json j, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must look like key.path=value");
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::parse_error&) {
      value = raw;
    }
    Json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
      node = &(*node)[parts[i]];
      if (node->is_null()) *node = Json::object();
    }
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    (*node)[parts.back()] = value;
  }
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  return ExperimentConfig::from_json(apply_overrides(read_json_file(path), overrides));
}

}  // namespace pulse
