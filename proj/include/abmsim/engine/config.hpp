#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abmsim/behavior/context.hpp"
#include "abmsim/epi/model.hpp"
#include "abmsim/labor/labor.hpp"
#include "abmsim/popgen/ipf.hpp"
#include "abmsim/popgen/synthesis.hpp"

namespace abmsim {

struct PopulationSource {
  /// Population CSV; when empty the population is synthesised.
  std::string path;
  std::size_t size = 1000;
  /// Population the run stands in for; count series are scaled by full_size / N.
  std::optional<double> full_size;
  /// Marginals JSON path; empty uses the built-in marginals.
  std::string marginals;
  std::vector<double> household_size_probs;
};

struct EpiConfig {
  /// Exactly one of r0 / beta is set (scalar = length-1 series).
  std::vector<double> r0;
  std::vector<double> beta;
  double susceptibility = 1.0;
  std::map<std::string, double> susceptibility_by_age;
  double mortality = 0.005;
  std::map<std::string, double> mortality_by_age;
  int latent_period = 5;
  int infectious_period = 7;
  double dt = 1.0;
  double initial_infected_fraction = 0.01;
};

enum class BehaviorMode : std::uint8_t { heuristic, archetype, per_agent };
enum class ExecutionMode : std::uint8_t { stochastic, mean_field };

std::string_view behavior_mode_name(BehaviorMode m) noexcept;
std::string_view execution_mode_name(ExecutionMode m) noexcept;

struct BehaviorConfig {
  BehaviorMode mode = BehaviorMode::heuristic;
  /// Fixed probabilities used in heuristic mode.
  double isolate_probability = 0.0;
  double work_probability = 1.0;
  /// Provider spec for archetype / per-agent modes (see make_provider).
  std::string provider = "heuristic:0.5";
  std::vector<Attribute> attributes{Attribute::age_band, Attribute::gender, Attribute::borough};
  std::size_t samples = 10;
  std::size_t parallelism = 4;
  std::size_t per_agent_cap = 1000;
  /// Reuse table entries when a (key, context, action) repeats.
  bool cache = false;
  ContextConfig context;
};

struct ExecutionConfig {
  ExecutionMode mode = ExecutionMode::stochastic;
  unsigned threads = 0;
  std::vector<int> snapshot_steps;
  int snapshot_every = 0;
};

struct SimulationConfig {
  int horizon_steps = 60;
  std::uint64_t seed = 0;
  PopulationSource population;
  GraphConfig graph;
  EpiConfig epi;
  LaborParams labor;
  VaccineProtocol vaccine;
  TestProtocol testing;
  StimulusSchedule stimulus;
  BehaviorConfig behavior;
  ExecutionConfig execution;

  int months() const noexcept { return (horizon_steps + 29) / 30; }
  bool snapshot_at(int step) const;
};

/// Parse and validate. Every violation is collected and thrown together as
/// a ConfigError carrying JSON-pointer paths. Missing keys take defaults.
SimulationConfig parse_config(const nlohmann::json& j);
SimulationConfig parse_config_text(const std::string& text);
SimulationConfig load_config(const std::filesystem::path& path);

/// Normalised form with every default materialised.
nlohmann::json to_json(const SimulationConfig& cfg);

/// FNV-1a over the canonical dump of to_json(cfg) without execution.threads,
/// as 16 hex digits.
std::string config_hash(const SimulationConfig& cfg);

/// Resolved disease parameters for a population.
EpiParams resolve_epi(const SimulationConfig& cfg, const Population& pop);

/// Dotted-path overrides, e.g. {"epi.R0": 5.5, "behavior.context.duration_offset_weeks": 60}.
struct ScenarioPatch {
  std::vector<std::pair<std::string, nlohmann::json>> overrides;

  static ScenarioPatch from_json(const nlohmann::json& j);
  bool empty() const noexcept { return overrides.empty(); }
  ScenarioPatch& set(std::string path, nlohmann::json value);
};

/// Pure override; throws ConfigError naming unknown paths. Setting epi.R0
/// clears epi.beta and vice versa.
SimulationConfig apply_patch(const SimulationConfig& cfg, const ScenarioPatch& patch);

}  // namespace abmsim
