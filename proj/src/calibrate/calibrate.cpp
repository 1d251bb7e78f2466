#include "abmsim/calibrate/calibrate.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "abmsim/core/adam.hpp"
#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/core/rng.hpp"

namespace abmsim::calib {

using nlohmann::json;

void CovariateSeries::validate() const {
  if (cols == 0 || rows == 0) throw DomainError("covariates: empty matrix");
  if (values.size() != rows * cols) throw DomainError("covariates: values do not match rows x cols");
  if (cadence_days < 1) throw DomainError("covariates: cadence_days must be >= 1");
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("covariates: non-finite entry");
}

std::size_t CovariateSeries::row_of_day(int t) const {
  const auto r = static_cast<std::size_t>(t / cadence_days);
  if (r >= rows)
    throw UsageError("covariates: " + std::to_string(rows) + " rows do not cover day " + std::to_string(t));
  return r;
}

CovariateSeries synthetic_covariates(std::span<const double> daily_cases, std::size_t cols,
                                     int lag_days, double noise, std::uint64_t seed) {
  if (daily_cases.empty()) throw DomainError("synthetic_covariates: empty case series");
  if (cols == 0 || lag_days < 0 || noise < 0.0) throw DomainError("synthetic_covariates: bad arguments");
  const double n = static_cast<double>(daily_cases.size());
  const double mean = std::accumulate(daily_cases.begin(), daily_cases.end(), 0.0) / n;
  double var = 0.0;
  for (double c : daily_cases) var += (c - mean) * (c - mean);
  const double sd = std::sqrt(var / n);
  CovariateSeries cov;
  cov.rows = daily_cases.size();
  cov.cols = cols;
  cov.values.resize(cov.rows * cols);
  for (std::size_t t = 0; t < cov.rows; ++t) {
    RngStream rng(seed, t, 0, Channel::calibration);
    for (std::size_t k = 0; k < cols; ++k) {
      const auto lag = static_cast<std::ptrdiff_t>((k + 1) * static_cast<std::size_t>(lag_days));
      const auto src = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - lag);
      const double z = sd > 0.0 ? (daily_cases[static_cast<std::size_t>(src)] - mean) / sd : 0.0;
      cov.values[t * cols + k] = z + noise * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    }
  }
  cov.spec = {{"kind", "synthetic_lagged_cases"}, {"cols", cols}, {"lag_days", lag_days},
              {"noise", noise}, {"seed", seed}};
  return cov;
}

namespace {

constexpr const char* kGates[3] = {"z", "r", "n"};
constexpr double kWeightLimit = 1e6;

std::vector<std::size_t> shape_of(const std::string& name, std::size_t d, std::size_t h) {
  if (name.rfind("gru.W_", 0) == 0) return {h, d};
  if (name.rfind("gru.U_", 0) == 0) return {h, h};
  if (name.rfind("gru.b_", 0) == 0) return {h};
  if (name == "head.W") return {2, h};
  return {2};
}

}  // namespace

CalibNet::CalibNet(std::size_t input_dim, std::size_t hidden, Bounds r0, Bounds iur)
    : input_dim_(input_dim), hidden_(hidden), r0_(r0), iur_(iur) {
  if (input_dim == 0 || hidden == 0) throw DomainError("CalibNet: dimensions must be >= 1");
  if (!(r0.lo < r0.hi) || !(iur.lo < iur.hi)) throw DomainError("CalibNet: empty output bounds");
  for (const char* g : kGates) {
    params_.add(ad::Param(std::string("gru.W_") + g, std::vector<double>(hidden * input_dim, 0.0),
                          -kWeightLimit, kWeightLimit));
    params_.add(ad::Param(std::string("gru.U_") + g, std::vector<double>(hidden * hidden, 0.0),
                          -kWeightLimit, kWeightLimit));
    params_.add(ad::Param(std::string("gru.b_") + g, std::vector<double>(hidden, 0.0), -kWeightLimit,
                          kWeightLimit));
  }
  params_.add(ad::Param("head.W", std::vector<double>(2 * hidden, 0.0), -kWeightLimit, kWeightLimit));
  params_.add(ad::Param("head.b", std::vector<double>(2, 0.0), -kWeightLimit, kWeightLimit));
}

void CalibNet::init_random(std::uint64_t seed) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::uint64_t k = 0;
  for (auto& p : params_) {
    RngStream rng(seed, 0, k++, Channel::calibration);
    for (double& v : p.value) v = a * (2.0 * rng.uniform() - 1.0);
  }
}

std::vector<ad::TapeValue> CalibNet::gru_forward(ad::Tape& tape, const CovariateSeries& cov) const {
  if (cov.cols != input_dim_)
    throw UsageError("gru_forward: covariates have " + std::to_string(cov.cols) + " columns, net expects " +
                     std::to_string(input_dim_));
  cov.validate();
  const auto& ps = params_;
  ad::TapeValue W[3], U[3], b[3];
  for (int g = 0; g < 3; ++g) {
    W[g] = tape.param(ps.at(std::string("gru.W_") + kGates[g]));
    U[g] = tape.param(ps.at(std::string("gru.U_") + kGates[g]));
    b[g] = tape.param(ps.at(std::string("gru.b_") + kGates[g]));
  }
  const std::size_t h = hidden_;
  ad::TapeValue state = tape.constant(std::vector<double>(h, 0.0));
  std::vector<ad::TapeValue> out;
  out.reserve(cov.rows);
  for (std::size_t t = 0; t < cov.rows; ++t) {
    const auto row = cov.row(t);
    auto x = tape.constant(std::vector<double>(row.begin(), row.end()));
    auto z = ad::sigmoid(ad::matvec(W[0], x, h) + ad::matvec(U[0], state, h) + b[0]);
    auto r = ad::sigmoid(ad::matvec(W[1], x, h) + ad::matvec(U[1], state, h) + b[1]);
    auto n = ad::tanh(ad::matvec(W[2], x, h) + ad::matvec(U[2], r * state, h) + b[2]);
    state = z * state + ad::one_minus(z) * n;
    out.push_back(state);
  }
  return out;
}

CalibNet::Outputs CalibNet::predict(ad::Tape& tape, const CovariateSeries& cov) const {
  const auto hs = gru_forward(tape, cov);
  auto head_w = tape.param(params_.at("head.W"));
  auto head_b = tape.param(params_.at("head.b"));
  std::vector<ad::TapeValue> r0, iur;
  r0.reserve(hs.size());
  iur.reserve(hs.size());
  for (const auto& h : hs) {
    auto s = ad::sigmoid(ad::matvec(head_w, h, 2) + head_b);
    r0.push_back(ad::slice(s, 0, 1) * (r0_.hi - r0_.lo) + r0_.lo);
    iur.push_back(ad::slice(s, 1, 1) * (iur_.hi - iur_.lo) + iur_.lo);
  }
  return {ad::concat(r0), ad::concat(iur)};
}

json CalibNet::to_json() const {
  json weights = json::object();
  for (const auto& p : params_)
    weights[p.name] = {{"shape", shape_of(p.name, input_dim_, hidden_)}, {"values", p.value}};
  return {{"input_dim", input_dim_},
          {"hidden", hidden_},
          {"bounds", {{"R0", {r0_.lo, r0_.hi}}, {"IUR", {iur_.lo, iur_.hi}}}},
          {"weights", weights}};
}

CalibNet CalibNet::from_json(const json& j) {
  try {
    const auto b = j.at("bounds");
    CalibNet net(j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                 {b.at("R0").at(0).get<double>(), b.at("R0").at(1).get<double>()},
                 {b.at("IUR").at(0).get<double>(), b.at("IUR").at(1).get<double>()});
    for (auto& p : net.params_) {
      auto values = j.at("weights").at(p.name).at("values").get<std::vector<double>>();
      if (values.size() != p.size()) throw SchemaError("calibration model: weight '" + p.name + "' has wrong size");
      p.value = std::move(values);
    }
    return net;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("calibration model: ") + e.what());
  }
}

ObservedData observed_from_trajectory(const Trajectory& traj) {
  ObservedData obs;
  obs.weekly_cases = aggregate(traj.series(&DailyAggregates::new_infections), Cadence::weekly).values;
  obs.monthly_unemployment = traj.monthly_series(&MonthlyAggregates::unemployment_rate);
  return obs;
}

namespace {

std::vector<double> read_indexed_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw SchemaError(path.string() + ": expected header '" + header + "'");
  std::vector<double> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("missing comma");
      const long idx = std::stol(line.substr(0, comma));
      if (idx != static_cast<long>(out.size())) throw std::invalid_argument("index out of sequence");
      std::size_t used = 0;
      const std::string rest = line.substr(comma + 1);
      const double v = std::stod(rest, &used);
      if (used != rest.size() || !std::isfinite(v)) throw std::invalid_argument("bad number");
      out.push_back(v);
    } catch (const std::exception& e) {
      throw SchemaError(path.string() + ", row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<double> read_weekly_cases_csv(const std::filesystem::path& path) {
  return read_indexed_csv(path, "week,cases");
}

std::vector<double> read_monthly_unemployment_csv(const std::filesystem::path& path) {
  return read_indexed_csv(path, "month,unemployment_rate");
}

void write_observed_csv(const ObservedData& obs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const char* header, const std::vector<double>& v) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
    out << std::setprecision(17) << header << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) out << i << ',' << v[i] << '\n';
  };
  write(dir / "observed_weekly_cases.csv", "week,cases", obs.weekly_cases);
  write(dir / "observed_monthly_unemployment.csv", "month,unemployment_rate", obs.monthly_unemployment);
}

LossWeights balanced_weights(const ObservedData& obs) {
  auto inv_sq_mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return m > 0.0 ? 1.0 / (m * m) : 1.0;
  };
  return {inv_sq_mean(obs.weekly_cases), inv_sq_mean(obs.monthly_unemployment)};
}

LossTerms calibration_loss(const ad::TapeValue& weekly_cases, const ad::TapeValue& monthly_unemployment,
                           const ObservedData& obs, const LossWeights& weights) {
  if (weights.cases < 0.0 || weights.unemployment < 0.0) throw DomainError("loss weights must be >= 0");
  ad::Tape& tape = weekly_cases.tape();
  LossTerms out;
  ad::TapeValue total = tape.constant(0.0);
  if (weights.cases > 0.0) {
    if (weekly_cases.size() != obs.weekly_cases.size())
      throw UsageError("loss: " + std::to_string(weekly_cases.size()) + " simulated weeks vs " +
                       std::to_string(obs.weekly_cases.size()) + " observed");
    auto mse = ad::mse(weekly_cases, tape.constant(obs.weekly_cases));
    out.cases_mse = mse.scalar();
    total = total + mse * weights.cases;
  }
  if (weights.unemployment > 0.0) {
    if (monthly_unemployment.size() != obs.monthly_unemployment.size())
      throw UsageError("loss: " + std::to_string(monthly_unemployment.size()) + " simulated months vs " +
                       std::to_string(obs.monthly_unemployment.size()) + " observed");
    auto mse = ad::mse(monthly_unemployment, tape.constant(obs.monthly_unemployment));
    out.unemployment_mse = mse.scalar();
    total = total + mse * weights.unemployment;
  }
  out.total = total;
  return out;
}

double CalibrationResult::mean_r0() const {
  if (r0_daily.empty()) return 0.0;
  return std::accumulate(r0_daily.begin(), r0_daily.end(), 0.0) / static_cast<double>(r0_daily.size());
}

StructuralInputs structural_inputs(ad::Tape& tape, const CalibNet& net, const CovariateSeries& cov,
                                   const ad::TapeValue& gamma0, const ad::TapeValue& gamma1,
                                   const SimulationConfig& cfg, const CalibrationOptions& opts) {
  const auto pred = net.predict(tape, cov);
  const int h = std::max(cfg.horizon_steps, 1);
  auto day_rows = std::make_shared<std::vector<std::uint32_t>>(static_cast<std::size_t>(h));
  for (int t = 0; t < h; ++t) (*day_rows)[static_cast<std::size_t>(t)] = static_cast<std::uint32_t>(cov.row_of_day(t));
  const double to_beta = 1.0 / (static_cast<double>(cfg.epi.infectious_period) * cfg.epi.dt);
  StructuralInputs in;
  in.beta = ad::gather(pred.r0, day_rows) * to_beta;
  in.gamma0 = gamma0;
  in.gamma1 = gamma1;
  const int months = std::max(cfg.months(), 1);
  if (opts.iur_source == IurSource::observed) {
    if (opts.observed_iur.empty()) throw UsageError("calibrate: iur_source=observed needs observed_iur");
    in.iur = tape.constant(opts.observed_iur);
  } else {
    auto month_rows = std::make_shared<std::vector<std::uint32_t>>(static_cast<std::size_t>(months));
    for (int m = 0; m < months; ++m)
      (*month_rows)[static_cast<std::size_t>(m)] =
          static_cast<std::uint32_t>(cov.row_of_day(std::min(m * 30, h - 1)));
    in.iur = ad::gather(pred.iur, month_rows);
  }
  return in;
}

namespace {

struct Evaluation {
  LossTerms terms;
  double total = 0.0;
  ad::Gradients grads;
  std::vector<double> r0_daily;
  std::vector<double> iur_monthly;
};

Evaluation evaluate(const SimulationConfig& cfg, const World& world, const ObservedData& obs,
                    const CovariateSeries& cov, const CalibNet& net, const ad::ParamSet& gammas,
                    const CalibrationOptions& opts, bool want_grad) {
  ad::Tape tape;
  auto g0 = opts.fit_gammas ? tape.param(gammas.at("gamma0")) : tape.constant(cfg.labor.gamma0);
  auto g1 = opts.fit_gammas ? tape.param(gammas.at("gamma1")) : tape.constant(cfg.labor.gamma1);
  const auto inputs = structural_inputs(tape, net, cov, g0, g1, cfg, opts);

  const int seeds = std::max(opts.stochastic_seeds, 1);
  SimulationConfig run_cfg = cfg;
  if (opts.stochastic_seeds > 0) run_cfg.execution.mode = ExecutionMode::stochastic;
  ad::TapeValue total;
  Evaluation ev;
  for (int s = 0; s < seeds; ++s) {
    run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(s);
    const auto out = run_taped(run_cfg, world, tape, inputs);
    auto terms = calibration_loss(ad::window_sum(out.new_infections, 7), out.unemployment, obs, opts.weights);
    auto scaled = terms.total * (1.0 / seeds);
    total = s == 0 ? scaled : total + scaled;
    ev.terms.cases_mse += terms.cases_mse / seeds;
    ev.terms.unemployment_mse += terms.unemployment_mse / seeds;
  }
  ev.terms.total = total;
  ev.total = total.scalar();
  const auto beta = inputs.beta.values();
  const double to_r0 = static_cast<double>(cfg.epi.infectious_period) * cfg.epi.dt;
  for (double b : beta) ev.r0_daily.push_back(b * to_r0);
  const auto iur = inputs.iur.values();
  ev.iur_monthly.assign(iur.begin(), iur.end());
  if (want_grad && std::isfinite(ev.total)) ev.grads = tape.backward(total);
  return ev;
}

}  // namespace

CalibrationResult calibrate(const SimulationConfig& cfg, const World& world, const ObservedData& obs,
                            const CovariateSeries& cov, const CalibrationOptions& opts) {
  if (opts.epochs < 0) throw DomainError("calibrate: epochs must be >= 0");
  if (!(opts.lr > 0.0)) throw DomainError("calibrate: lr must be > 0");
  cov.validate();
  for (int t = 0; t < cfg.horizon_steps; ++t) (void)cov.row_of_day(t);

  CalibNet net(cov.cols, opts.hidden, opts.r0_bounds);
  net.init_random(opts.seed);
  ad::ParamSet gammas;
  {
    RngStream rng(opts.seed, 1, 0, Channel::calibration);
    const double g0 = kGamma0Lo + (kGamma0Hi - kGamma0Lo) * rng.uniform();
    const double g1 = kGamma1Lo + (kGamma1Hi - kGamma1Lo) * rng.uniform();
    gammas.add(ad::Param("gamma0", opts.fit_gammas ? g0 : cfg.labor.gamma0, kGamma0Lo, kGamma0Hi));
    gammas.add(ad::Param("gamma1", opts.fit_gammas ? g1 : cfg.labor.gamma1, kGamma1Lo, kGamma1Hi));
  }

  CalibrationResult result;
  ad::AdamState net_state, gamma_state;
  double best = std::numeric_limits<double>::infinity();
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch <= opts.epochs; ++epoch) {
    const bool last = epoch == opts.epochs;
    auto ev = evaluate(cfg, world, obs, cov, net, gammas, opts, !last);
    if (!std::isfinite(ev.total)) {
      std::ostringstream os;
      os << "calibrate: non-finite loss at epoch " << epoch << " (cases_mse=" << ev.terms.cases_mse
         << ", unemployment_mse=" << ev.terms.unemployment_mse << ")";
      throw NumericError(os.str());
    }
    LossReport rep;
    rep.epoch = epoch;
    rep.cases_mse = ev.terms.cases_mse;
    rep.unemployment_mse = ev.terms.unemployment_mse;
    rep.total = ev.total;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rep);
    if (epoch == 0) result.initial_loss = ev.total;
    if (ev.total < best) {
      best = ev.total;
      result.best_epoch = epoch;
      result.net = net;
      result.gamma0 = gammas.at("gamma0").scalar();
      result.gamma1 = gammas.at("gamma1").scalar();
      result.r0_daily = std::move(ev.r0_daily);
      result.iur_monthly = std::move(ev.iur_monthly);
    }
    if (opts.on_epoch && !opts.on_epoch(rep)) break;
    if (last) break;
    ad::adam_step(net.params(), ev.grads, net_state, opts.lr);
    if (opts.fit_gammas) ad::adam_step(gammas, ev.grads, gamma_state, opts.lr);
  }
  result.best_loss = best;
  return result;
}

json result_to_json(const CalibrationResult& r, const CovariateSeries& cov) {
  json history = json::array();
  for (const auto& h : r.history)
    history.push_back({{"epoch", h.epoch},
                       {"cases_mse", h.cases_mse},
                       {"unemployment_mse", h.unemployment_mse},
                       {"total", h.total},
                       {"wall_seconds", h.wall_seconds}});
  return {{"net", r.net.to_json()},
          {"gamma0", r.gamma0},
          {"gamma1", r.gamma1},
          {"best_epoch", r.best_epoch},
          {"initial_loss", r.initial_loss},
          {"best_loss", r.best_loss},
          {"mean_r0", r.mean_r0()},
          {"r0_daily", r.r0_daily},
          {"iur_monthly", r.iur_monthly},
          {"covariates", {{"rows", cov.rows}, {"cols", cov.cols}, {"cadence_days", cov.cadence_days},
                          {"spec", cov.spec}}},
          {"history", history}};
}

void save_result(const CalibrationResult& result, const CovariateSeries& cov,
                 const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17) << result_to_json(result, cov).dump(2) << '\n';
}

}  // namespace abmsim::calib
