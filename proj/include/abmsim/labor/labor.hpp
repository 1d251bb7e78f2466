#pragma once

#include <span>
#include <vector>

#include "abmsim/core/tape.hpp"

namespace abmsim {

struct LaborParams {
  double gamma0 = -0.5;
  double gamma1 = 1.0;
  /// Insured unemployment rate per month; the last value is held.
  std::vector<double> iur{0.05};

  double iur_at(int month) const;
  void validate() const;
};

inline constexpr double kGamma0Lo = -1.0, kGamma0Hi = 0.0;
inline constexpr double kGamma1Lo = 0.0, kGamma1Hi = 2.0;

/// mu = clamp(gamma0 * mean(W) + gamma1 * C_month, 0, 1). W is averaged over
/// all N agents. Throws UsageError when month is outside the iur series.
double unemployment_rate(std::span<const double> willingness, double gamma0, double gamma1,
                         std::span<const double> iur, int month);

/// Taped version on scalars: mean_w, gamma0, gamma1, c (all size 1). The
/// clamp passes gradients straight through, so a fit started in the clamped
/// region still moves.
ad::TapeValue unemployment_rate(const ad::TapeValue& mean_w, const ad::TapeValue& gamma0,
                                const ad::TapeValue& gamma1, const ad::TapeValue& c);

/// Month index of `step` when it falls on a month boundary, else -1.
inline int month_boundary(int step, int month_days = 30) {
  return step % month_days == 0 ? step / month_days : -1;
}

}  // namespace abmsim
