#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include <nlohmann/json.hpp>

#include "abmsim/analysis/analysis.hpp"
#include "abmsim/calibrate/calibrate.hpp"
#include "abmsim/cli/cli.hpp"
#include "abmsim/core/error.hpp"
#include "abmsim/epi/model.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace abmsim;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json trajectory_json(const Trajectory& t) {
  json daily = json::object();
  daily["new_exposures"] = t.series(&DailyAggregates::new_exposures);
  daily["new_infections"] = t.series(&DailyAggregates::new_infections);
  daily["active_infections"] = t.series(&DailyAggregates::active_infections);
  daily["deaths"] = t.series(&DailyAggregates::deaths);
  daily["isolation_rate"] = t.series(&DailyAggregates::isolation_rate);
  json comps = json::array();
  for (const auto& d : t.daily) comps.push_back(d.compartments);
  daily["compartments"] = comps;
  return {{"daily", daily},
          {"monthly",
           {{"unemployment_rate", t.monthly_series(&MonthlyAggregates::unemployment_rate)},
            {"mean_willingness", t.monthly_series(&MonthlyAggregates::mean_willingness)}}},
          {"seed", t.seed},
          {"config_hash", t.config_hash},
          {"mode", t.mode},
          {"population", t.population}};
}

SimulationConfig seeded(const std::string& config, std::uint64_t seed) {
  auto cfg = parse_config_text(config);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_abmsim, m) {
  m.doc() = "Agent-based epidemic and labor simulator";

  // later registrations are tried first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("version", &cli::version);

  m.def("infection_probability", &infection_probability, py::arg("beta"), py::arg("s"), py::arg("n"),
        py::arg("infected_sum"), py::arg("dt") = 1.0);

  m.def(
      "normalize_config", [](const std::string& config) { return to_py(to_json(parse_config_text(config))); },
      py::arg("config_json"));

  m.def(
      "config_hash", [](const std::string& config) { return config_hash(parse_config_text(config)); },
      py::arg("config_json"));

  m.def(
      "simulate",
      [](const std::string& config, std::uint64_t seed) {
        const auto cfg = seeded(config, seed);
        Trajectory traj;
        {
          py::gil_scoped_release release;
          traj = run(cfg, build_world(cfg));
        }
        return to_py(trajectory_json(traj));
      },
      py::arg("config_json"), py::arg("seed"));

  m.def(
      "counterfactual",
      [](const std::string& config, std::uint64_t seed, const std::string& patch, int n_seeds) {
        const auto cfg = seeded(config, seed);
        const auto p = ScenarioPatch::from_json(json::parse(patch));
        analysis::CounterfactualReport rep;
        {
          py::gil_scoped_release release;
          rep = analysis::counterfactual(cfg, p, n_seeds);
        }
        return to_py(rep.to_json());
      },
      py::arg("config_json"), py::arg("seed"), py::arg("patch_json"), py::arg("n_seeds"));

  m.def(
      "prospective_sweep",
      [](const std::string& config, std::uint64_t seed, const std::string& protocol_b, const std::string& field,
         const std::vector<double>& grid, int n_seeds) {
        const auto cfg = seeded(config, seed);
        VaccineProtocol b = cfg.vaccine;
        for (const auto& [k, v] : json::parse(protocol_b).items())
          analysis::set_protocol_field(b, k, v.get<double>());
        analysis::FitnessCurve curve;
        {
          py::gil_scoped_release release;
          curve = analysis::prospective_sweep(cfg, cfg.vaccine, b, {field, grid}, n_seeds);
        }
        return to_py(curve.to_json());
      },
      py::arg("config_json"), py::arg("seed"), py::arg("protocol_b_json"), py::arg("field"), py::arg("grid"),
      py::arg("n_seeds") = 1);

  m.def(
      "calibrate_self",
      [](const std::string& config, std::uint64_t seed, int epochs, double lr, std::size_t hidden,
         const std::string& iur_source) {
        const auto cfg = seeded(config, seed);
        calib::CalibrationResult res;
        calib::CovariateSeries cov;
        {
          py::gil_scoped_release release;
          const auto world = build_world(cfg);
          const auto truth = run(cfg, world);
          const auto obs = calib::observed_from_trajectory(truth);
          cov = calib::synthetic_covariates(truth.series(&DailyAggregates::new_infections), 3, 7, 0.1, seed);
          calib::CalibrationOptions opts;
          opts.epochs = epochs;
          opts.lr = lr;
          opts.hidden = hidden;
          opts.seed = seed;
          opts.weights = calib::balanced_weights(obs);
          if (iur_source == "observed") {
            opts.iur_source = calib::IurSource::observed;
            opts.observed_iur = cfg.labor.iur;
          } else if (iur_source != "net") {
            throw UsageError("iur_source must be 'net' or 'observed'");
          }
          res = calib::calibrate(cfg, world, obs, cov, opts);
        }
        return to_py(calib::result_to_json(res, cov));
      },
      py::arg("config_json"), py::arg("seed"), py::arg("epochs") = 100, py::arg("lr") = 0.02,
      py::arg("hidden") = 32, py::arg("iur_source") = "observed");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::dispatch(args, std::cout, std::cerr);
      },
      py::arg("args"));
}
