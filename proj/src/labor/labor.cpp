#include "abmsim/labor/labor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"

namespace abmsim {

double LaborParams::iur_at(int month) const {
  if (month < 0) throw UsageError("labor: negative month");
  if (iur.empty()) return 0.0;
  return iur[std::min<std::size_t>(static_cast<std::size_t>(month), iur.size() - 1)];
}

void LaborParams::validate() const {
  if (!(gamma0 >= kGamma0Lo && gamma0 <= kGamma0Hi))
    throw DomainError("labor: gamma0 must be in [-1, 0]");
  if (!(gamma1 >= kGamma1Lo && gamma1 <= kGamma1Hi))
    throw DomainError("labor: gamma1 must be in [0, 2]");
  for (double c : iur)
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("labor: iur values must be in [0, 1]");
}

double unemployment_rate(std::span<const double> willingness, double gamma0, double gamma1,
                         std::span<const double> iur, int month) {
  if (month < 0 || static_cast<std::size_t>(month) >= iur.size())
    throw UsageError("unemployment_rate: month " + std::to_string(month) + " outside iur series of " +
                     std::to_string(iur.size()));
  double mean_w = 0.0;
  for (double w : willingness) mean_w += w;
  if (!willingness.empty()) mean_w /= static_cast<double>(willingness.size());
  return std::clamp(gamma0 * mean_w + gamma1 * iur[static_cast<std::size_t>(month)], 0.0, 1.0);
}

ad::TapeValue unemployment_rate(const ad::TapeValue& mean_w, const ad::TapeValue& gamma0,
                                const ad::TapeValue& gamma1, const ad::TapeValue& c) {
  return ad::clamp_st(gamma0 * mean_w + gamma1 * c, 0.0, 1.0);
}

}  // namespace abmsim
