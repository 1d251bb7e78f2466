#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abmsim/engine/simulator.hpp"

namespace abmsim::analysis {

enum class PollMetric : std::uint8_t {
  median_income,
  isolation_rate,
  infection_rate,
  unemployment_rate,
  mean_willingness
};

std::string_view metric_name(PollMetric m) noexcept;
std::optional<PollMetric> parse_metric(std::string_view name) noexcept;

/// Group-level question about one run. Per-agent metrics other than
/// median_income read the trajectory's snapshots inside [from_step, to_step]
/// (negative bounds are open): infection_rate takes the last snapshot,
/// isolation_rate and mean_willingness average over all of them, and
/// unemployment_rate applies the labor model to the group's willingness at
/// the last snapshot.
struct PollQuery {
  std::vector<Attribute> group_by;
  PollMetric metric = PollMetric::infection_rate;
  /// Keep agents whose label is listed, for every filtered attribute.
  std::map<Attribute, std::vector<std::string>> filter;
  int from_step = -1;
  int to_step = -1;

  /// {"group_by": [...], "metric": "...", "filter": {"attr": [labels]},
  ///  "window": [from, to]}. Unknown names raise UsageError naming them.
  static PollQuery from_json(const nlohmann::json& j);
};

struct PollRow {
  std::vector<std::string> group;
  double value = 0.0;
  std::size_t count = 0;
};

struct PollTable {
  std::vector<Attribute> group_by;
  PollMetric metric = PollMetric::infection_rate;
  /// Ordered by group codes.
  std::vector<PollRow> rows;

  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Pure aggregation. Medians take the lower middle element.
PollTable poll(const Population& pop, const Trajectory& traj, const PollQuery& q);

/// Runs go through this when set; otherwise the config's own provider is used.
using ProviderFactory = std::function<std::unique_ptr<DecisionProvider>()>;

struct ScenarioOptions {
  /// Scenario runs executed at once (0: hardware concurrency).
  unsigned concurrency = 0;
  ProviderFactory provider;
};

struct Spread {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct PairedRun {
  std::uint64_t seed = 0;
  double peak_baseline = 0.0;
  double peak_patched = 0.0;
  int peak_step_baseline = 0;
  int peak_step_patched = 0;
  double cumulative_baseline = 0.0;
  double cumulative_patched = 0.0;
  double deaths_baseline = 0.0;
  double deaths_patched = 0.0;
};

struct CounterfactualReport {
  std::string baseline_hash;
  std::string patched_hash;
  nlohmann::json patch;
  std::vector<std::uint64_t> seeds;
  std::vector<PairedRun> runs;
  std::vector<Trajectory> baseline;
  std::vector<Trajectory> patched;
  /// Per-step paired difference (patched - baseline) across seeds.
  std::vector<Spread> active_delta;
  std::vector<Spread> cumulative_delta;
  Spread peak_delta;
  Spread peak_step_delta;
  Spread cumulative_total_delta;

  nlohmann::json to_json() const;
  /// step,active_mean,active_min,active_max,cumulative_mean,cumulative_min,cumulative_max
  void write_csv(const std::filesystem::path& path) const;
};

/// Runs the baseline and patched configs with seeds cfg.seed, ..., cfg.seed +
/// n_seeds - 1 on a world built once from cfg (rebuilt for the patched side
/// only when the patch touches the population or graph).
CounterfactualReport counterfactual(const SimulationConfig& cfg, const ScenarioPatch& patch, int n_seeds,
                                    const ScenarioOptions& opts = {});

struct SweepSpec {
  /// A VaccineProtocol field: first_dose_efficacy, second_dose_efficacy,
  /// dose_gap, daily_supply, second_dose_dropout or start_step.
  std::string field;
  std::vector<double> grid;
};

/// Set a named VaccineProtocol field; UsageError on unknown names.
void set_protocol_field(VaccineProtocol& p, const std::string& field, double value);

struct FitnessPoint {
  double value = 0.0;
  /// Mean over seeds of deaths(B) / deaths(A); NaN when undefined.
  double fitness = 0.0;
  bool undefined = false;
  double deaths_a = 0.0;
  double deaths_b = 0.0;
};

struct FitnessCurve {
  std::string field;
  std::vector<FitnessPoint> points;
  /// Smallest grid value with fitness < 1.
  std::optional<double> threshold;
  std::size_t runs = 0;

  bool non_increasing() const;
  nlohmann::json to_json() const;
  /// value,fitness,deaths_a,deaths_b,undefined
  void write_csv(const std::filesystem::path& path) const;
};

/// For each grid value, set the field in both protocols and run them on a
/// shared world. Mean-field configs need one run per protocol and ignore
/// n_seeds.
FitnessCurve prospective_sweep(const SimulationConfig& cfg, const VaccineProtocol& a, const VaccineProtocol& b,
                               const SweepSpec& sweep, int n_seeds, const ScenarioOptions& opts = {});

}  // namespace abmsim::analysis
