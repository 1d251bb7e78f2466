#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "abmsim/core/rng.hpp"
#include "abmsim/core/tape.hpp"

namespace abmsim::ad {

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr double kDefaultSoftTemperature = 0.1;

/// Hard Bernoulli sample with straight-through gradient (db/dp = 1).
/// Element i of a vector input consumes the i-th uniform of `rng`.
TapeValue bernoulli_st(const TapeValue& p, RngStream& rng);
/// Same, with element i compared against `uniforms[i]`.
TapeValue bernoulli_st(const TapeValue& p, std::span<const double> uniforms);

enum class CategoricalMode { hard_st, gumbel_softmax };

struct CategoricalSample {
  std::size_t index = 0;
  /// One-hot (hard_st) or relaxed simplex vector (gumbel_softmax).
  TapeValue sample;
};

/// Sample from a categorical distribution given as a probability vector.
CategoricalSample categorical_st(const TapeValue& probs, RngStream& rng,
                                 CategoricalMode mode = CategoricalMode::hard_st,
                                 double temperature = 1.0);

/// Gumbel-softmax relaxation with caller-supplied Gumbel noise, so paired
/// evaluations at different temperatures can share randomness.
TapeValue gumbel_softmax(const TapeValue& probs, std::span<const double> gumbel_noise,
                         double temperature);

/// Soft "x < y": sigmoid((y - x) / temperature).
/// soft_compare(x, y) + soft_compare(y, x) == 1 exactly in floating point.
TapeValue soft_compare(const TapeValue& x, const TapeValue& y,
                       double temperature = kDefaultSoftTemperature);

enum class LogicalKind { logical_and, logical_or };

/// Product t-norm (and) / probabilistic sum (or) on [0, 1].
TapeValue soft_logical(const TapeValue& a, const TapeValue& b, LogicalKind kind);

/// Plain-double kernels shared by the vectorised simulator.
double soft_compare_value(double x, double y, double temperature);
void check_probability(double p, const char* where);

}  // namespace abmsim::ad
