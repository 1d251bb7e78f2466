#include "abmsim/behavior/context.hpp"

#include <algorithm>
#include <cmath>

#include "abmsim/core/error.hpp"

namespace abmsim {

int ContextConfig::duration_months(int t) const {
  const int offset = static_cast<int>(std::floor(duration_offset_weeks / 4.0));
  return std::max(0, initial_duration_months + t / month_days + offset);
}

ContextBin initial_context(const ContextConfig& cfg, double payment) {
  ContextBin c;
  c.cases_bin = cfg.binning.cases_bin(cfg.initial_cases);
  c.change_bin = cfg.binning.change_bin(cfg.initial_change_pct);
  c.duration_months = cfg.duration_months(0);
  c.payment = payment;
  c.step = 0;
  return c;
}

ContextRaw context_raw(std::span<const double> new_infections, int t, const ContextConfig& cfg,
                       double scale) {
  if (t < 1) return {cfg.initial_cases, cfg.initial_change_pct};
  if (static_cast<std::size_t>(t) > new_infections.size())
    throw UsageError("context_from_trajectory: trajectory has no step " + std::to_string(t - 1));
  if (cfg.window_days < 1 || cfg.month_days < 1) throw DomainError("context window must be >= 1 day");
  const double before_start = cfg.initial_cases / cfg.window_days;
  auto window = [&](int last) {
    double s = 0.0;
    for (int d = last - cfg.window_days + 1; d <= last; ++d)
      s += d < 0 ? before_start : new_infections[static_cast<std::size_t>(d)] * scale;
    return s;
  };
  ContextRaw r;
  r.cases = window(t - 1);
  const double prev = window(t - 1 - cfg.month_days);
  if (prev > 0.0)
    r.change_pct = (r.cases - prev) / prev * 100.0;
  else
    r.change_pct = r.cases > 0.0 ? 100.0 : 0.0;
  return r;
}

ContextBin context_from_series(std::span<const double> new_infections, int t,
                               const ContextConfig& cfg, double payment, double scale) {
  if (t < 1) return initial_context(cfg, payment);
  const auto raw = context_raw(new_infections, t, cfg, scale);
  ContextBin c;
  c.cases_bin = cfg.binning.cases_bin(raw.cases);
  c.change_bin = cfg.binning.change_bin(raw.change_pct);
  c.duration_months = cfg.duration_months(t);
  c.payment = payment;
  c.step = t;
  return c;
}

ContextBin context_from_trajectory(const Trajectory& traj, int t, const ContextConfig& cfg,
                                   double payment) {
  std::vector<double> series(traj.daily.size());
  for (std::size_t s = 0; s < series.size(); ++s) series[s] = traj.daily[s].new_infections;
  return context_from_series(series, t, cfg, payment);
}

}  // namespace abmsim
