#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "abmsim/behavior/provider.hpp"
#include "abmsim/core/error.hpp"
#include "abmsim/core/tape.hpp"
#include "abmsim/engine/config.hpp"
#include "abmsim/engine/trajectory.hpp"

namespace abmsim {

/// Static inputs shared by runs: agents and their contact network.
struct World {
  Population population;
  ContactGraph graph;
  std::shared_ptr<const Csr> contacts;  // union of all layers
  std::vector<std::string> warnings;
};

/// Population from the config's source (CSV or synthesis) and its graph,
/// both seeded with cfg.seed.
World build_world(const SimulationConfig& cfg);
World make_world(Population pop, const GraphConfig& graph, std::uint64_t seed);
/// Wrap an existing population and graph.
World make_world(Population pop, ContactGraph graph);

/// Structural parameters placed on a tape. beta has size 1 or horizon;
/// iur size 1 or months; gamma0 and gamma1 size 1.
struct StructuralInputs {
  ad::TapeValue beta;
  ad::TapeValue gamma0;
  ad::TapeValue gamma1;
  ad::TapeValue iur;
};

/// Loss-relevant series as tape nodes (already scaled).
struct TapedOutputs {
  ad::TapeValue new_infections;  // size horizon
  ad::TapeValue deaths;          // cumulative, size horizon
  ad::TapeValue unemployment;    // size months
};

/// Raised when a step fails; carries the trajectory up to the failing step.
class RunError : public Error {
 public:
  RunError(int step, const std::string& what, Trajectory partial)
      : Error("step " + std::to_string(step) + ": " + what), step_(step),
        partial_(std::make_shared<Trajectory>(std::move(partial))) {}
  int step() const noexcept { return step_; }
  const Trajectory& partial() const noexcept { return *partial_; }

 private:
  int step_;
  std::shared_ptr<Trajectory> partial_;
};

/// Simulate cfg.horizon_steps steps. Sub-steps per step, in order: decision
/// context, behavior (both actions are estimated every step; willingness to
/// work is resampled on month boundaries), isolation, exposure, SEIRM
/// progression, vaccination, testing, stimulus, aggregation. `provider` defaults to the one named in
/// the config when behavior is not heuristic.
Trajectory run(const SimulationConfig& cfg, const World& world, DecisionProvider* provider = nullptr);

/// As run(), with the structural parameters taken from `inputs` and the
/// loss-relevant aggregates recorded on `tape`. In mean-field mode the
/// outputs are smooth in the inputs; in stochastic mode new infections
/// carry a straight-through gradient of the expected exposures.
TapedOutputs run_taped(const SimulationConfig& cfg, const World& world, ad::Tape& tape,
                       const StructuralInputs& inputs, Trajectory* trajectory = nullptr,
                       DecisionProvider* provider = nullptr);

/// Inputs holding the config's own values as constants on `tape`.
StructuralInputs config_inputs(const SimulationConfig& cfg, ad::Tape& tape);

enum class Cadence { daily, weekly, monthly };

struct AggregateSeries {
  std::vector<double> values;
  /// True when a trailing partial window was dropped.
  bool dropped_partial = false;
};

/// Resample a daily series: weekly sums over 7-step windows; monthly takes
/// the last value of each 30-step window.
AggregateSeries aggregate(std::span<const double> daily, Cadence cadence);

}  // namespace abmsim
