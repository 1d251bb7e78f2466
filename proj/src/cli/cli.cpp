#include "abmsim/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abmsim/analysis/analysis.hpp"
#include "abmsim/calibrate/calibrate.hpp"
#include "abmsim/core/error.hpp"
#include "abmsim/popgen/io.hpp"

#ifndef ABMSIM_VERSION
#define ABMSIM_VERSION "0.0.0"
#endif

namespace abmsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const char* version() noexcept { return ABMSIM_VERSION; }

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string provider;
  std::string patch;
  unsigned threads = 0;
};

struct CalibrateArgs {
  std::string cases;
  std::string unemployment;
  bool from_config = false;
  std::string covariates;
  int cov_cadence = 1;
  std::size_t cov_cols = 3;
  int cov_lag = 7;
  double cov_noise = 0.1;
  int epochs = 500;
  double lr = 1e-4;
  std::size_t hidden = 32;
  std::string iur_source = "net";
  bool balanced = true;
  int stochastic_seeds = 0;
};

struct AnalyzeArgs {
  std::string query;
  int seeds = 10;
  unsigned concurrency = 0;
  std::string protocol_b;
  std::string field = "first_dose_efficacy";
  std::vector<double> grid;
};

json read_json_arg(const std::string& arg, const char* what) {
  std::string text = arg;
  if (!arg.empty() && arg.front() == '@') {
    std::ifstream in(arg.substr(1));
    if (!in) throw IoError(std::string("cannot open ") + what + " '" + arg.substr(1) + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

SimulationConfig prepare(const Common& c, bool seeded) {
  auto cfg = load_config(c.config);
  if (!c.patch.empty()) cfg = apply_patch(cfg, ScenarioPatch::from_json(read_json_arg(c.patch, "--patch")));
  if (seeded) cfg.seed = c.seed;
  if (!c.provider.empty()) cfg.behavior.provider = c.provider;
  if (c.threads != 0) cfg.execution.threads = c.threads;
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17) << j.dump(2) << '\n';
}

/// Config echo with everything needed to repeat the run.
void write_run_info(const fs::path& dir, const SimulationConfig& cfg, const std::vector<std::string>& args,
                    json extra = json::object()) {
  json info{{"version", version()},
            {"seed", cfg.seed},
            {"config_hash", config_hash(cfg)},
            {"command", args},
            {"config", to_json(cfg)}};
  for (auto& [k, v] : extra.items()) info[k] = v;
  write_json(dir / "run.json", info);
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  header.clear();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw SchemaError(path.string() + ", row " + std::to_string(lineno) + ": '" + cell + "' is not a number");
      }
    }
    if (row.size() != header.size())
      throw SchemaError(path.string() + ", row " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields");
    rows.push_back(std::move(row));
  }
  return rows;
}

/// CSV `day,<name>...`; the first column is ignored.
calib::CovariateSeries read_covariates(const fs::path& path, int cadence) {
  std::vector<std::string> header;
  const auto rows = read_numeric_csv(path, header);
  if (header.size() < 2) throw SchemaError(path.string() + ": need at least one covariate column");
  calib::CovariateSeries cov;
  cov.rows = rows.size();
  cov.cols = header.size() - 1;
  cov.cadence_days = cadence;
  for (const auto& r : rows) cov.values.insert(cov.values.end(), r.begin() + 1, r.end());
  cov.spec = {{"kind", "csv"}, {"path", path.string()}, {"columns", std::vector<std::string>(header.begin() + 1, header.end())}};
  cov.validate();
  return cov;
}

int cmd_popgen(const Common& c, bool seed_given, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg = prepare(c, seed_given);
  const auto world = build_world(cfg);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_population_csv(world.population, dir / "population.csv");
  std::size_t edges = 0;
  for (const auto& layer : world.graph.layers) edges += layer.nnz();
  json summary{{"agents", world.population.size()},
               {"households", world.population.household_count()},
               {"directed_edges", edges},
               {"mean_degree", world.graph.mean_degree()},
               {"warnings", world.warnings}};
  write_json(dir / "population_summary.json", summary);
  write_run_info(dir, cfg, args);
  for (const auto& w : world.warnings) out << "warning: " << w << '\n';
  out << "wrote " << world.population.size() << " agents to " << (dir / "population.csv").string() << '\n';
  return kExitOk;
}

int cmd_simulate(const Common& c, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg = prepare(c, true);
  const auto world = build_world(cfg);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_run_info(dir, cfg, args);
  try {
    auto traj = run(cfg, world);
    write_trajectory(traj, dir);
    const double peak = traj.daily.empty()
                            ? 0.0
                            : std::max_element(traj.daily.begin(), traj.daily.end(),
                                               [](const auto& a, const auto& b) {
                                                 return a.active_infections < b.active_infections;
                                               })->active_infections;
    out << "simulated " << traj.daily.size() << " steps; peak active infections " << peak << '\n';
  } catch (const RunError& e) {
    write_trajectory(e.partial(), dir, "partial");
    throw;
  }
  return kExitOk;
}

int cmd_calibrate(const Common& c, const CalibrateArgs& a, const std::vector<std::string>& args,
                  std::ostream& out) {
  auto cfg = prepare(c, true);
  const auto world = build_world(cfg);
  calib::ObservedData obs;
  std::vector<double> daily_cases;
  if (a.from_config) {
    const auto truth = run(cfg, world);
    obs = calib::observed_from_trajectory(truth);
    daily_cases = truth.series(&DailyAggregates::new_infections);
  } else {
    if (a.cases.empty() || a.unemployment.empty())
      throw UsageError("calibrate needs --cases and --unemployment, or --from-config");
    obs.weekly_cases = calib::read_weekly_cases_csv(a.cases);
    obs.monthly_unemployment = calib::read_monthly_unemployment_csv(a.unemployment);
    for (double w : obs.weekly_cases)
      for (int d = 0; d < 7; ++d) daily_cases.push_back(w / 7.0);
  }
  if (obs.weekly_cases.size() != static_cast<std::size_t>(cfg.horizon_steps / 7))
    throw UsageError("calibrate: " + std::to_string(obs.weekly_cases.size()) + " observed weeks, horizon has " +
                     std::to_string(cfg.horizon_steps / 7));
  if (obs.monthly_unemployment.size() != static_cast<std::size_t>(cfg.months()))
    throw UsageError("calibrate: " + std::to_string(obs.monthly_unemployment.size()) +
                     " observed months, horizon has " + std::to_string(cfg.months()));

  calib::CovariateSeries cov;
  if (!a.covariates.empty()) {
    cov = read_covariates(a.covariates, a.cov_cadence);
  } else {
    daily_cases.resize(static_cast<std::size_t>(cfg.horizon_steps), daily_cases.empty() ? 0.0 : daily_cases.back());
    cov = calib::synthetic_covariates(daily_cases, a.cov_cols, a.cov_lag, a.cov_noise, cfg.seed);
  }

  calib::CalibrationOptions opts;
  opts.epochs = a.epochs;
  opts.lr = a.lr;
  opts.hidden = a.hidden;
  opts.seed = cfg.seed;
  opts.stochastic_seeds = a.stochastic_seeds;
  if (a.balanced) opts.weights = calib::balanced_weights(obs);
  if (a.iur_source == "observed") {
    opts.iur_source = calib::IurSource::observed;
    opts.observed_iur = cfg.labor.iur;
  }
  const int every = std::max(1, a.epochs / 10);
  opts.on_epoch = [&](const calib::LossReport& r) {
    if (r.epoch % every == 0 || r.epoch == a.epochs)
      out << "epoch " << r.epoch << " loss " << r.total << " (cases " << r.cases_mse << ", unemployment "
          << r.unemployment_mse << ")\n";
    return true;
  };
  const auto result = calib::calibrate(cfg, world, obs, cov, opts);

  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_run_info(dir, cfg, args);
  calib::save_result(result, cov, dir / "calibration.json");
  calib::write_observed_csv(obs, dir);
  {
    std::ofstream h(dir / "loss_history.csv");
    h << std::setprecision(17) << "epoch,total,cases_mse,unemployment_mse,wall_seconds\n";
    for (const auto& r : result.history)
      h << r.epoch << ',' << r.total << ',' << r.cases_mse << ',' << r.unemployment_mse << ',' << r.wall_seconds
        << '\n';
  }
  SimulationConfig fitted = cfg;
  fitted.epi.r0 = result.r0_daily;
  fitted.epi.beta.clear();
  fitted.labor.gamma0 = result.gamma0;
  fitted.labor.gamma1 = result.gamma1;
  fitted.labor.iur = result.iur_monthly;
  write_trajectory(run(fitted, world), dir, "fitted");
  out << "best epoch " << result.best_epoch << ": loss " << result.best_loss << " (initial " << result.initial_loss
      << "), mean R0 " << result.mean_r0() << ", gamma0 " << result.gamma0 << ", gamma1 " << result.gamma1 << '\n';
  return kExitOk;
}

int cmd_poll(const Common& c, const AnalyzeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.query.empty()) throw UsageError("analyze poll needs --query");
  auto cfg = prepare(c, true);
  const auto query = analysis::PollQuery::from_json(read_json_arg(a.query, "--query"));
  if (query.metric != analysis::PollMetric::median_income && !cfg.snapshot_at(cfg.horizon_steps))
    cfg.execution.snapshot_steps.push_back(cfg.horizon_steps);
  const auto world = build_world(cfg);
  const auto traj = run(cfg, world);
  const auto table = analysis::poll(world.population, traj, query);
  const fs::path dir(c.out);
  write_run_info(dir, cfg, args);
  write_trajectory(traj, dir);
  write_json(dir / "poll.json", table.to_json());
  table.write_csv(dir / "poll.csv");
  for (const auto& r : table.rows) {
    std::string g;
    for (const auto& s : r.group) g += (g.empty() ? "" : "/") + s;
    out << (g.empty() ? "all" : g) << ": " << r.value << " (n=" << r.count << ")\n";
  }
  return kExitOk;
}

int cmd_counterfactual(const Common& c, const AnalyzeArgs& a, const std::vector<std::string>& args,
                       std::ostream& out) {
  if (c.patch.empty()) throw UsageError("analyze counterfactual needs --patch");
  Common base = c;
  base.patch.clear();
  auto cfg = prepare(base, true);
  const auto patch = ScenarioPatch::from_json(read_json_arg(c.patch, "--patch"));
  analysis::ScenarioOptions opts;
  opts.concurrency = a.concurrency;
  const auto rep = analysis::counterfactual(cfg, patch, a.seeds, opts);
  const fs::path dir(c.out);
  write_run_info(dir, cfg, args, {{"patched_config", to_json(apply_patch(cfg, patch))}});
  write_json(dir / "counterfactual.json", rep.to_json());
  rep.write_csv(dir / "counterfactual_deltas.csv");
  out << "peak delta mean " << rep.peak_delta.mean << " [" << rep.peak_delta.min << ", " << rep.peak_delta.max
      << "]; cumulative delta mean " << rep.cumulative_total_delta.mean << '\n';
  return kExitOk;
}

int cmd_prospective(const Common& c, const AnalyzeArgs& a, const std::vector<std::string>& args,
                    std::ostream& out) {
  if (a.grid.empty()) throw UsageError("analyze prospective needs --grid");
  auto cfg = prepare(c, true);
  const VaccineProtocol pa = cfg.vaccine;
  VaccineProtocol pb = pa;
  if (!a.protocol_b.empty()) {
    const auto j = read_json_arg(a.protocol_b, "--protocol-b");
    if (!j.is_object()) throw UsageError("--protocol-b must be a JSON object of vaccine fields");
    for (const auto& [k, v] : j.items()) {
      if (!v.is_number()) throw UsageError("--protocol-b: '" + k + "' must be a number");
      analysis::set_protocol_field(pb, k, v.get<double>());
    }
  }
  analysis::ScenarioOptions opts;
  opts.concurrency = a.concurrency;
  const auto curve = analysis::prospective_sweep(cfg, pa, pb, {a.field, a.grid}, a.seeds, opts);
  const fs::path dir(c.out);
  write_run_info(dir, cfg, args);
  write_json(dir / "fitness.json", curve.to_json());
  curve.write_csv(dir / "fitness.csv");
  for (const auto& p : curve.points)
    out << a.field << '=' << p.value << ": fitness " << (p.undefined ? std::string("undefined") : std::to_string(p.fitness))
        << '\n';
  out << "threshold: " << (curve.threshold ? std::to_string(*curve.threshold) : std::string("none")) << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    const auto cfg = parse_config_text(ss.str());
    out << std::setprecision(17) << to_json(cfg).dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    for (const auto& i : e.issues()) err << i.pointer << ": " << i.message << '\n';
    return kExitDomain;
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Agent-based epidemic and labor simulator", "abmsim"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  Common common;
  CalibrateArgs cal;
  AnalyzeArgs an;
  std::string validate_path;

  auto add_common = [&](CLI::App* sub, bool seed_required) {
    sub->add_option("--config", common.config, "Config JSON")->required()->check(CLI::ExistingFile);
    auto* seed = sub->add_option("--seed", common.seed, "Master seed");
    if (seed_required) seed->required();
    sub->add_option("--out", common.out, "Output directory")->required();
    sub->add_option("--provider", common.provider, "heuristic[:p] | mock:<path> | fatigue | remote");
    sub->add_option("--threads", common.threads, "Worker threads (0: all cores)");
    return seed;
  };

  auto* popgen = app.add_subcommand("popgen", "Synthesise a population and contact graph");
  auto* popgen_seed = add_common(popgen, false);

  auto* simulate = app.add_subcommand("simulate", "Run one simulation");
  add_common(simulate, true);
  simulate->add_option("--patch", common.patch, "JSON object of dotted-path overrides (or @file)");

  auto* calibrate = app.add_subcommand("calibrate", "Fit R0, IUR and labor coefficients to observed series");
  add_common(calibrate, true);
  calibrate->add_option("--patch", common.patch, "JSON object of dotted-path overrides (or @file)");
  calibrate->add_option("--cases", cal.cases, "CSV week,cases")->check(CLI::ExistingFile);
  calibrate->add_option("--unemployment", cal.unemployment, "CSV month,unemployment_rate")->check(CLI::ExistingFile);
  calibrate->add_flag("--from-config", cal.from_config, "Use a run of the config itself as the observed data");
  calibrate->add_option("--covariates", cal.covariates, "CSV day,<covariates...>")->check(CLI::ExistingFile);
  calibrate->add_option("--covariate-cadence", cal.cov_cadence, "Days per covariate row")->check(CLI::PositiveNumber);
  calibrate->add_option("--covariate-cols", cal.cov_cols, "Synthetic covariate columns")->check(CLI::PositiveNumber);
  calibrate->add_option("--covariate-lag", cal.cov_lag, "Synthetic covariate lag in days")->check(CLI::NonNegativeNumber);
  calibrate->add_option("--covariate-noise", cal.cov_noise, "Synthetic covariate noise sd")->check(CLI::NonNegativeNumber);
  calibrate->add_option("--epochs", cal.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  calibrate->add_option("--lr", cal.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  calibrate->add_option("--hidden", cal.hidden, "GRU hidden size")->check(CLI::PositiveNumber);
  calibrate->add_option("--iur-source", cal.iur_source, "net | observed")->check(CLI::IsMember({"net", "observed"}));
  calibrate->add_option("--stochastic-seeds", cal.stochastic_seeds, "Average stochastic runs over this many seeds")
      ->check(CLI::NonNegativeNumber);
  calibrate->add_flag("!--raw-weights", cal.balanced, "Unweighted sum of the two MSE terms");

  auto* analyze = app.add_subcommand("analyze", "Polls, counterfactuals and prospective sweeps");
  analyze->require_subcommand(1);
  auto* poll = analyze->add_subcommand("poll", "Group-level query on one run");
  add_common(poll, true);
  poll->add_option("--patch", common.patch, "JSON object of dotted-path overrides (or @file)");
  poll->add_option("--query", an.query, "PollQuery JSON (or @file)")->required();

  auto* cf = analyze->add_subcommand("counterfactual", "Paired runs of a baseline and a patched config");
  add_common(cf, true);
  cf->add_option("--patch", common.patch, "JSON object of dotted-path overrides (or @file)")->required();
  cf->add_option("--seeds", an.seeds, "Paired seeds")->check(CLI::PositiveNumber);
  cf->add_option("--concurrency", an.concurrency, "Runs executed at once");

  auto* pro = analyze->add_subcommand("prospective", "Sweep a vaccine protocol field over two protocols");
  add_common(pro, true);
  pro->add_option("--patch", common.patch, "JSON object of dotted-path overrides (or @file)");
  pro->add_option("--protocol-b", an.protocol_b, "JSON of vaccine fields overriding the config's protocol");
  pro->add_option("--field", an.field, "VaccineProtocol field to sweep");
  pro->add_option("--grid", an.grid, "Comma-separated grid values")->delimiter(',')->required();
  pro->add_option("--seeds", an.seeds, "Seeds per grid value (stochastic mode)")->check(CLI::PositiveNumber);
  pro->add_option("--concurrency", an.concurrency, "Runs executed at once");

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  validate->add_option("config", validate_path, "Config JSON")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) {
      failed = sub;
      for (const auto* inner : sub->get_subcommands()) failed = inner;
    }
    err << failed->help();
    return kExitUsage;
  }

  std::vector<std::string> command{"abmsim"};
  command.insert(command.end(), args.begin(), args.end());
  try {
    if (popgen->parsed()) return cmd_popgen(common, popgen_seed->count() > 0, command, out);
    if (simulate->parsed()) return cmd_simulate(common, command, out);
    if (calibrate->parsed()) return cmd_calibrate(common, cal, command, out);
    if (poll->parsed()) return cmd_poll(common, an, command, out);
    if (cf->parsed()) return cmd_counterfactual(common, an, command, out);
    if (pro->parsed()) return cmd_prospective(common, an, command, out);
    if (validate->parsed()) return cmd_validate(validate_path, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  err << app.help();
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace abmsim::cli
