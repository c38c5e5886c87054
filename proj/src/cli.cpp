#include "pulse/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pulse/error.hpp"
#include "pulse/harness.hpp"
#include "pulse/stats.hpp"

namespace pulse {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& a) {
  app->add_option("--config", a.config_path, "JSON experiment configuration")->required();
  app->add_option("--set", a.sets, "Override a config entry, key.path=value (repeatable)");
  app->add_option("--out", a.out_dir, "Output directory (overrides output.dir)");
  app->add_option("--trials", a.trials, "Number of trials (overrides experiment.trials)");
  app->add_option("--seed", a.seed, "Base seed (overrides experiment.base_seed)");
  app->add_flag("--quiet", a.quiet, "Suppress progress output");
}

std::vector<std::string> override_list(const CommonArgs& a) {
  std::vector<std::string> ov = a.sets;
  if (a.trials) ov.push_back("experiment.trials=" + std::to_string(*a.trials));
  if (a.seed) ov.push_back("experiment.base_seed=" + std::to_string(*a.seed));
  if (!a.out_dir.empty()) ov.push_back("output.dir=" + Json(a.out_dir).dump());
  return ov;
}

void print_regret_summary(const ExperimentResult& r, const ExperimentConfig& c, std::ostream& out) {
  out << "agent,mean_final_cum_regret,se_final_cum_regret\n";
  for (std::size_t i = 0; i < c.agents.size(); ++i) {
    const SampleSummary s = summarize(r.final_regret(i));
    out << c.agents[i].label << ',' << s.mean << ',' << s.std_error << '\n';
  }
}

int cmd_validate(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = load_config(a.config_path, override_list(a));
  out << c.to_json().dump(2) << '\n';
  if (!a.quiet)
    err << "valid: T=" << c.experiment.horizon << " trials=" << c.experiment.trials
        << " N=" << c.pretrain.trajectories << " T0=" << c.pretrain.length << " hash=" << c.hash() << '\n';
  return 0;
}

int cmd_pretrain(const CommonArgs& a, std::ostream& out) {
  ExperimentConfig c = load_config(a.config_path, override_list(a));
  if (c.environment.kind == EnvKind::Replay) throw UsageError("replay imputers are fitted by the replay command");
  if (c.pretrain.save_path.empty()) c.pretrain.save_path = (fs::path(c.output_dir) / "imputer.txt").string();
  const PretrainResult r = pretrain(c);
  fs::create_directories(c.output_dir);
  Json doc = c.to_json();
  doc["metadata"] = {{"config_hash", c.hash()}, {"imputer", r.provenance}, {"overrides", override_list(a)}};
  std::ofstream(fs::path(c.output_dir) / "pretrain.json") << doc.dump(2) << '\n';
  if (!a.quiet) out << "imputer written to " << c.pretrain.save_path << '\n';
  return 0;
}

int cmd_simulate(const CommonArgs& a, std::ostream& out) {
  const std::vector<std::string> ov = override_list(a);
  const ExperimentConfig c = load_config(a.config_path, ov);
  const Experiment e = prepare_experiment(c);
  const ExperimentResult r = run_experiment(e, {ov, a.quiet});
  write_experiment(r, c, c.output_dir);
  if (!a.quiet) {
    print_regret_summary(r, c, out);
    out << "results written to " << c.output_dir << '\n';
  }
  return 0;
}

int cmd_replay(const CommonArgs& a, std::ostream& out) {
  const std::vector<std::string> ov = override_list(a);
  const ExperimentConfig c = load_config(a.config_path, ov);
  const ReplayResult r = run_replay(c, {ov, a.quiet});
  write_replay(r, c, c.output_dir);
  if (!a.quiet) {
    out << "agent,mean_final_ctr,se_final_ctr\n";
    for (std::size_t i = 0; i < c.agents.size(); ++i) {
      const SampleSummary s = summarize(r.final_ctr(i));
      out << c.agents[i].label << ',' << s.mean << ',' << s.std_error << '\n';
    }
    out << "base_rate," << r.base_rate << ",0\n";
  }
  return 0;
}

int cmd_calibrate(const CommonArgs& a, std::ostream& out) {
  const std::vector<std::string> ov = override_list(a);
  const ExperimentConfig c = load_config(a.config_path, ov);
  if (c.environment.kind == EnvKind::Replay) throw UsageError("calibration needs a step environment");
  const PretrainResult pre = pretrain(c);
  BandOptions opt;
  opt.alpha = c.calibration.alpha;
  opt.split_seed = c.calibration.split_seed;
  opt.bootstrap_draws = c.calibration.bootstrap_draws;
  opt.bandwidth = c.calibration.bandwidth;
  opt.fit_target = [c](const HistoricalDataset& d) { return fit_configured_imputer(c, d); };
  const BandEstimate band = estimate_dt_band(pre.data, Matrix(), opt);
  Json doc = band.report();
  doc["metadata"] = {{"config_hash", c.hash()},
                     {"config", c.to_json()},
                     {"plug_in_dt", band.plug_in_dt()},
                     {"surrogate", true},
                     {"overrides", ov}};
  fs::create_directories(c.output_dir);
  const fs::path p = fs::path(c.output_dir) / "calibration_report.json";
  std::ofstream f(p);
  if (!f) throw IoError(p.string() + ": cannot open for writing");
  f << doc.dump(2) << '\n';
  if (!a.quiet)
    out << "dhat " << band.dhat << " plug_in_dt " << band.plug_in_dt() << " bandwidth " << band.bandwidth
        << " grid_points " << band.grid.rows() << " empty_points " << band.empty_points << '\n';
  return 0;
}

struct SweepSpec {
  std::string key;
  std::vector<std::string> values;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("sweep expects KEY=[v1,v2,...], got '" + text + "'");
  SweepSpec s{trim(text.substr(0, eq)), {}};
  std::string list = trim(text.substr(eq + 1));
  if (list.size() < 2 || list.front() != '[' || list.back() != ']')
    throw UsageError("sweep values must be a bracketed list, got '" + list + "'");
  std::stringstream ss(list.substr(1, list.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
    if (item.empty()) throw UsageError("sweep list has an empty entry");
    s.values.push_back(item);
  }
  if (s.values.empty()) throw UsageError("sweep list is empty");
  return s;
}

/// Overrides realizing one sweep point. `rho` accepts the word `linear`.
std::vector<std::string> sweep_overrides(const std::string& key, const std::string& value) {
  if (key == "rho") {
    if (value == "linear") return {"environment.synthetic.w_model=linear"};
    return {"environment.synthetic.w_model=nonlinear", "environment.synthetic.rho=" + value};
  }
  if (key == "N") return {"pretrain.trajectories=" + value};
  if (key == "T0") return {"pretrain.length=" + value};
  return {key + "=" + value};
}

int cmd_sweep(const CommonArgs& a, const std::string& spec_text, std::ostream& out) {
  const SweepSpec spec = parse_sweep(spec_text);
  const std::vector<std::string> base_ov = override_list(a);
  const ExperimentConfig base = load_config(a.config_path, base_ov);
  fs::create_directories(base.output_dir);
  const fs::path summary_path = fs::path(base.output_dir) / "sweep_summary.csv";
  std::ofstream summary(summary_path);
  if (!summary) throw IoError(summary_path.string() + ": cannot open for writing");
  summary << "key,value,agent,mean_final_cum_regret,se_final_cum_regret\n";
  summary.precision(17);
  for (const std::string& value : spec.values) {
    const std::string child_dir = (fs::path(base.output_dir) / (spec.key + "=" + value)).string();
    std::vector<std::string> ov = base_ov;
    for (const auto& o : sweep_overrides(spec.key, value)) ov.push_back(o);
    ov.push_back("output.dir=" + Json(child_dir).dump());
    const ExperimentConfig c = load_config(a.config_path, ov);
    const Experiment e = prepare_experiment(c);
    const ExperimentResult r = run_experiment(e, {ov, a.quiet});
    write_experiment(r, c, child_dir);
    for (std::size_t i = 0; i < c.agents.size(); ++i) {
      const SampleSummary s = summarize(r.final_regret(i));
      summary << spec.key << ',' << value << ',' << c.agents[i].label << ',' << s.mean << ',' << s.std_error << '\n';
      if (!a.quiet) out << spec.key << '=' << value << ' ' << c.agents[i].label << ' ' << s.mean << " ± " << s.std_error << '\n';
    }
  }
  if (!a.quiet) out << "summary written to " << summary_path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear contextual bandits with partially observed contexts"};
  app.name("pulse");
  app.require_subcommand(1);
  CommonArgs args;
  std::string sweep_text;
  CLI::App* sub_validate = app.add_subcommand("validate-config", "Parse and print the resolved configuration");
  CLI::App* sub_pretrain = app.add_subcommand("pretrain", "Fit and persist the imputer");
  CLI::App* sub_simulate = app.add_subcommand("simulate", "Run a multi-trial regret experiment");
  CLI::App* sub_replay = app.add_subcommand("replay", "Replay evaluation on a click log");
  CLI::App* sub_calibrate = app.add_subcommand("calibrate", "Estimate the imputation-error band");
  CLI::App* sub_sweep = app.add_subcommand("sweep", "Run one experiment per value of a parameter");
  for (CLI::App* s : {sub_validate, sub_pretrain, sub_simulate, sub_replay, sub_calibrate, sub_sweep})
    add_common(s, args);
  sub_sweep->add_option("spec", sweep_text, "KEY=[v1,v2,...]; KEY may be rho, N, T0 or a dotted config path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (sub_validate->parsed()) return cmd_validate(args, out, err);
    if (sub_pretrain->parsed()) return cmd_pretrain(args, out);
    if (sub_simulate->parsed()) return cmd_simulate(args, out);
    if (sub_replay->parsed()) return cmd_replay(args, out);
    if (sub_calibrate->parsed()) return cmd_calibrate(args, out);
    if (sub_sweep->parsed()) return cmd_sweep(args, sweep_text, out);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace pulse
