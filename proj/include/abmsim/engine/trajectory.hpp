#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace abmsim {

/// Aggregates h(s(t)) recorded once per simulated day.
struct DailyAggregates {
  double new_exposures = 0;      // S -> E this step
  double new_infections = 0;     // onset of infectiousness (E -> I) this step
  double active_infections = 0;  // agents in I after the step
  double deaths = 0;             // cumulative agents in M after the step
  double isolation_rate = 0;     // share of living agents isolating this step
  std::array<double, 5> compartments{};  // S, E, I, R, M after the step
};

struct MonthlyAggregates {
  double unemployment_rate = 0;
  double mean_willingness = 0;
};

/// Per-agent state captured at one step. Occupancies are one-hot in
/// stochastic mode and probabilities in mean-field mode.
struct Snapshot {
  int step = 0;
  std::vector<std::array<float, 5>> occupancy;
  std::vector<float> ever_infected;
  std::vector<float> isolating;
  std::vector<float> willingness;
};

struct Trajectory {
  std::vector<DailyAggregates> daily;
  std::vector<MonthlyAggregates> monthly;
  std::vector<Snapshot> snapshots;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string mode;
  /// Applied to count series when a sub-sample stands in for a larger population.
  double scale = 1.0;
  std::size_t population = 0;
  /// Agents infectious at t = 0 (scaled like the count series).
  double initial_infected = 0.0;
  /// Labor parameters used, for group-level polling.
  double gamma0 = 0, gamma1 = 0;
  std::vector<double> iur;

  std::vector<double> series(double DailyAggregates::*field) const;
  std::vector<double> monthly_series(double MonthlyAggregates::*field) const;
  /// initial_infected + running sum of new exposures.
  std::vector<double> cumulative_infections() const;
};

inline constexpr const char* kDailyCsvHeader =
    "step,new_exposures,new_infections,active_infections,deaths,isolation_rate";
inline constexpr const char* kMonthlyCsvHeader = "month,unemployment_rate,mean_willingness";

/// Write `<stem>_daily.csv`, `<stem>_monthly.csv` and `<stem>.meta.json` under `dir`.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir,
                      const std::string& stem = "trajectory");

}  // namespace abmsim
