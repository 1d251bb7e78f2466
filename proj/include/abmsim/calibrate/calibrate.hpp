#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abmsim/core/tape.hpp"
#include "abmsim/engine/simulator.hpp"

namespace abmsim::calib {

/// Covariate matrix, one row per `cadence_days` simulated days, row-major.
struct CovariateSeries {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  int cadence_days = 1;
  /// How the series was produced; saved with a fitted model.
  nlohmann::json spec = nlohmann::json::object();

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  /// Throws DomainError on non-finite entries or a shape mismatch.
  void validate() const;
  /// Row index feeding simulated day t.
  std::size_t row_of_day(int t) const;
};

/// Stand-in covariates: column k holds the daily case curve lagged by
/// (k + 1) * lag_days, standardised, plus uniform noise of the given
/// standard deviation.
CovariateSeries synthetic_covariates(std::span<const double> daily_cases, std::size_t cols,
                                     int lag_days, double noise, std::uint64_t seed);

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

/// Single-layer GRU over covariate rows with a linear head to (R0, IUR),
/// each squashed into its bounds by a scaled sigmoid.
///
/// Recurrence (Cho et al.):
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r * h) + b_n)
///   h' = z * h + (1 - z) * n
class CalibNet {
 public:
  CalibNet() = default;
  CalibNet(std::size_t input_dim, std::size_t hidden, Bounds r0 = {2.5, 8.0}, Bounds iur = {0.0, 1.0});

  /// Uniform(-1/sqrt(h), 1/sqrt(h)) weights from the seed.
  void init_random(std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden() const noexcept { return hidden_; }
  Bounds r0_bounds() const noexcept { return r0_; }
  Bounds iur_bounds() const noexcept { return iur_; }
  ad::ParamSet& params() noexcept { return params_; }
  const ad::ParamSet& params() const noexcept { return params_; }

  /// Hidden state after each row (zero initial state).
  std::vector<ad::TapeValue> gru_forward(ad::Tape& tape, const CovariateSeries& cov) const;

  struct Outputs {
    ad::TapeValue r0;   // one per row
    ad::TapeValue iur;  // one per row
  };
  Outputs predict(ad::Tape& tape, const CovariateSeries& cov) const;

  nlohmann::json to_json() const;
  static CalibNet from_json(const nlohmann::json& j);

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  Bounds r0_{2.5, 8.0};
  Bounds iur_{0.0, 1.0};
  ad::ParamSet params_;
};

/// Calibration targets.
struct ObservedData {
  std::vector<double> weekly_cases;
  std::vector<double> monthly_unemployment;
};

/// Weekly sums of new infections and the monthly unemployment series.
ObservedData observed_from_trajectory(const Trajectory& traj);
/// CSV `week,cases`.
std::vector<double> read_weekly_cases_csv(const std::filesystem::path& path);
/// CSV `month,unemployment_rate`.
std::vector<double> read_monthly_unemployment_csv(const std::filesystem::path& path);
void write_observed_csv(const ObservedData& obs, const std::filesystem::path& dir);

struct LossWeights {
  double cases = 1.0;
  double unemployment = 1.0;
};

/// Weights 1 / mean(target)^2 so both terms are relative squared errors.
LossWeights balanced_weights(const ObservedData& obs);

struct LossTerms {
  ad::TapeValue total;
  double cases_mse = 0.0;
  double unemployment_mse = 0.0;
};

/// weights.cases * MSE(weekly) + weights.unemployment * MSE(monthly). A zero
/// weight drops the term. Throws UsageError on a length mismatch.
LossTerms calibration_loss(const ad::TapeValue& weekly_cases, const ad::TapeValue& monthly_unemployment,
                           const ObservedData& obs, const LossWeights& weights);

struct LossReport {
  int epoch = 0;
  double cases_mse = 0.0;
  double unemployment_mse = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;
};

enum class IurSource { net, observed };

struct CalibrationOptions {
  int epochs = 500;
  double lr = 1e-4;
  std::size_t hidden = 32;
  std::uint64_t seed = 0;
  LossWeights weights;
  /// Where the simulator's IUR series comes from. With `observed` the net's
  /// IUR head is unused and `observed_iur` drives the labor model.
  IurSource iur_source = IurSource::net;
  std::vector<double> observed_iur;
  bool fit_gammas = true;
  Bounds r0_bounds{2.5, 8.0};
  /// Average the loss over this many seeds in stochastic mode (0: use the
  /// config's execution mode as is, i.e. mean-field unless set otherwise).
  int stochastic_seeds = 0;
  /// Called after every epoch; return false to stop early.
  std::function<bool(const LossReport&)> on_epoch;
};

struct CalibrationResult {
  CalibNet net;
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  std::vector<LossReport> history;
  int best_epoch = -1;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  /// Structural series at the best epoch: R0 per day, IUR per month.
  std::vector<double> r0_daily;
  std::vector<double> iur_monthly;

  double mean_r0() const;
};

/// Structural inputs for one forward pass of net + gammas on `tape`.
StructuralInputs structural_inputs(ad::Tape& tape, const CalibNet& net, const CovariateSeries& cov,
                                   const ad::TapeValue& gamma0, const ad::TapeValue& gamma1,
                                   const SimulationConfig& cfg, const CalibrationOptions& opts);

/// Fit the net (and gamma0, gamma1 when opts.fit_gammas) with Adam. Returns
/// the best-loss parameters. epochs = 0 returns the initial parameters.
CalibrationResult calibrate(const SimulationConfig& cfg, const World& world, const ObservedData& obs,
                            const CovariateSeries& cov, const CalibrationOptions& opts);

/// Fitted model: net weights with shapes, bounds, gammas, covariate spec and
/// loss history.
nlohmann::json result_to_json(const CalibrationResult& result, const CovariateSeries& cov);
void save_result(const CalibrationResult& result, const CovariateSeries& cov,
                 const std::filesystem::path& path);

}  // namespace abmsim::calib
