#include "abmsim/core/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"

namespace abmsim::ad {

namespace {

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Identity pullback for every element (straight-through).
void pass_through(const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
  const auto& g = adj[self];
  auto& ga = adj[tp.parent(self, 0)];
  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
}

std::vector<double> checked_probs(const TapeValue& probs, const char* where) {
  const auto v = probs.values();
  if (v.empty()) throw DomainError(std::string(where) + ": empty probability vector");
  double total = 0.0;
  for (double p : v) {
    if (!(p >= 0.0)) throw DomainError(std::string(where) + ": negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DomainError(std::string(where) + ": probabilities do not sum to 1");
  return {v.begin(), v.end()};
}

}  // namespace

void check_probability(double p, const char* where) {
  if (!(p >= -kProbabilityTolerance && p <= 1.0 + kProbabilityTolerance))
    throw DomainError(std::string(where) + ": probability " + std::to_string(p) +
                      " outside [0, 1]");
}

TapeValue bernoulli_st(const TapeValue& p, RngStream& rng) {
  const auto pv = p.values();
  std::vector<double> b(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    check_probability(pv[i], "bernoulli_st");
    b[i] = rng.uniform() < pv[i] ? 1.0 : 0.0;
  }
  return p.tape().record("bernoulli_st", std::move(b), {p}, pass_through);
}

TapeValue bernoulli_st(const TapeValue& p, std::span<const double> uniforms) {
  const auto pv = p.values();
  if (uniforms.size() != pv.size()) throw UsageError("bernoulli_st: uniforms length mismatch");
  std::vector<double> b(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    check_probability(pv[i], "bernoulli_st");
    b[i] = uniforms[i] < pv[i] ? 1.0 : 0.0;
  }
  return p.tape().record("bernoulli_st", std::move(b), {p}, pass_through);
}

CategoricalSample categorical_st(const TapeValue& probs, RngStream& rng, CategoricalMode mode,
                                 double temperature) {
  const auto pv = checked_probs(probs, "categorical_st");
  if (mode == CategoricalMode::gumbel_softmax) {
    if (!(temperature > 0)) throw DomainError("categorical_st: temperature must be > 0");
    std::vector<double> noise(pv.size());
    for (double& g : noise) g = rng.gumbel();
    auto y = gumbel_softmax(probs, noise, temperature);
    const auto yv = y.values();
    const auto idx = static_cast<std::size_t>(std::max_element(yv.begin(), yv.end()) - yv.begin());
    return {idx, y};
  }
  const double u = rng.uniform();
  std::size_t idx = pv.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    acc += pv[i];
    if (u < acc && pv[i] > 0.0) {
      idx = i;
      break;
    }
  }
  while (pv[idx] == 0.0 && idx > 0) --idx;  // rounding guard: never return a zero-mass index
  std::vector<double> onehot(pv.size(), 0.0);
  onehot[idx] = 1.0;
  auto y = probs.tape().record("categorical_st", std::move(onehot), {probs}, pass_through);
  return {idx, y};
}

TapeValue gumbel_softmax(const TapeValue& probs, std::span<const double> noise,
                         double temperature) {
  if (!(temperature > 0)) throw DomainError("gumbel_softmax: temperature must be > 0");
  const auto pv = checked_probs(probs, "gumbel_softmax");
  if (noise.size() != pv.size()) throw UsageError("gumbel_softmax: noise size mismatch");
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> z(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i)
    z[i] = pv[i] > 0.0 ? (std::log(pv[i]) + noise[i]) / temperature : ninf;
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> y(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += (y[i] = std::exp(z[i] - m));
  for (double& v : y) v /= total;
  return probs.tape().record(
      "gumbel_softmax", std::move(y), {probs},
      [temperature](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
        const std::size_t ip = tp.parent(self, 0);
        const auto& p = tp.value(ip);
        const auto& y = tp.value(self);
        const auto& g = adj[self];
        double inner = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (p[i] <= 0.0) continue;
          const double dz = y[i] * (g[i] - inner);
          adj[ip][i] += dz / (temperature * p[i]);
        }
      });
}

double soft_compare_value(double x, double y, double temperature) {
  if (!(temperature > 0)) throw DomainError("soft_compare: temperature must be > 0");
  const double d = (y - x) / temperature;
  // Evaluate the lower half directly and the upper half as a complement so
  // that the two orderings sum to exactly one.
  return d <= 0 ? sigmoid_value(d) : 1.0 - sigmoid_value(-d);
}

TapeValue soft_compare(const TapeValue& x, const TapeValue& y, double temperature) {
  if (!(temperature > 0)) throw DomainError("soft_compare: temperature must be > 0");
  const auto xv = x.values();
  const auto yv = y.values();
  if (xv.size() != yv.size() && xv.size() != 1 && yv.size() != 1)
    throw UsageError("soft_compare: size mismatch");
  const std::size_t n = std::max(xv.size(), yv.size());
  const std::size_t sx = xv.size() == 1 ? 0 : 1;
  const std::size_t sy = yv.size() == 1 ? 0 : 1;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = soft_compare_value(xv[i * sx], yv[i * sy], temperature);
  return x.tape().record(
      "soft_compare", std::move(s), {x, y},
      [temperature, sx, sy](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
        const std::size_t ix = tp.parent(self, 0);
        const std::size_t iy = tp.parent(self, 1);
        const auto& s = tp.value(self);
        const auto& g = adj[self];
        for (std::size_t i = 0; i < s.size(); ++i) {
          const double d = g[i] * s[i] * (1.0 - s[i]) / temperature;
          adj[ix][i * sx] -= d;
          adj[iy][i * sy] += d;
        }
      });
}

TapeValue soft_logical(const TapeValue& a, const TapeValue& b, LogicalKind kind) {
  for (double v : a.values()) check_probability(v, "soft_logical");
  for (double v : b.values()) check_probability(v, "soft_logical");
  const auto ab = mul(a, b);
  if (kind == LogicalKind::logical_and) return ab;
  return sub(add(a, b), ab);
}

}  // namespace abmsim::ad
