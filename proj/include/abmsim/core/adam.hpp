#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "abmsim/core/tape.hpp"

namespace abmsim::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::int64_t step = 0;
};

/// One Adam update over every param that has a gradient entry, followed by
/// projection into each param's bounds. Params without a gradient are left
/// untouched. Throws NumericError on a non-finite gradient.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

}  // namespace abmsim::ad
