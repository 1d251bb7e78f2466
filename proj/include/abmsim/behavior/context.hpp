#pragma once

#include <span>

#include "abmsim/behavior/prompt.hpp"
#include "abmsim/engine/trajectory.hpp"

namespace abmsim {

/// How decision contexts are derived from the simulated trajectory.
struct ContextConfig {
  /// Cases in the window before the run starts, and their percent change.
  double initial_cases = 0.0;
  double initial_change_pct = 0.0;
  int initial_duration_months = 0;
  /// Shifts every prompt's pandemic duration (fatigue experiments).
  double duration_offset_weeks = 0.0;
  int window_days = 7;
  int month_days = 30;
  ContextBinning binning;

  int duration_months(int t) const;
};

/// Context used at t = 0: the configured initial values, binned.
ContextBin initial_context(const ContextConfig& cfg, double payment);

/// Context for step t from daily new infections of steps [0, t). Cases are
/// the window sum ending at t-1; change compares with the window one month
/// earlier. Days before step 0 count initial_cases / window_days each.
ContextBin context_from_series(std::span<const double> new_infections, int t,
                               const ContextConfig& cfg, double payment, double scale = 1.0);

/// Same, reading the trajectory's new-infection series (already scaled).
ContextBin context_from_trajectory(const Trajectory& traj, int t, const ContextConfig& cfg,
                                   double payment);

/// Raw (unbinned) case count and percent change behind a context.
struct ContextRaw {
  double cases = 0.0;
  double change_pct = 0.0;
};
ContextRaw context_raw(std::span<const double> new_infections, int t, const ContextConfig& cfg,
                       double scale = 1.0);

}  // namespace abmsim
