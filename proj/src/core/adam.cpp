#include "abmsim/core/adam.hpp"

#include <cmath>

#include "abmsim/core/error.hpp"

namespace abmsim::ad {

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) continue;
    const Param& p = params.at(name);
    if (g.size() != p.size())
      throw UsageError("adam_step: gradient size mismatch for '" + name + "'");
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NumericError("adam_step: non-finite gradient for '" + name + "'[" +
                           std::to_string(i) + "]");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Param& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    p.grad = g;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.clamp();
  }
}

}  // namespace abmsim::ad
