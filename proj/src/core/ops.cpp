#include "abmsim/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "abmsim/core/error.hpp"

namespace abmsim::ad {

namespace {

std::size_t broadcast_size(const char* op, std::size_t na, std::size_t nb) {
  if (na == nb) return na;
  if (na == 1) return nb;
  if (nb == 1) return na;
  throw UsageError(std::string(op) + ": size mismatch " + std::to_string(na) + " vs " +
                   std::to_string(nb));
}

// y = f(a, b) elementwise with broadcasting; da/db give partials given (a, b, y).
template <class F, class DA, class DB>
TapeValue binary(const char* op, const TapeValue& a, const TapeValue& b, F f, DA da, DB db) {
  Tape& t = a.tape();
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = broadcast_size(op, av.size(), bv.size());
  const std::size_t sa = av.size() == 1 ? 0 : 1;
  const std::size_t sb = bv.size() == 1 ? 0 : 1;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = f(av[i * sa], bv[i * sb]);
  return t.record(op, std::move(y), {a, b},
                  [sa, sb, da, db](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const std::size_t ia = tp.parent(self, 0);
                    const std::size_t ib = tp.parent(self, 1);
                    const auto& x = tp.value(ia);
                    const auto& z = tp.value(ib);
                    const auto& y = tp.value(self);
                    const auto& g = adj[self];
                    for (std::size_t i = 0; i < y.size(); ++i) {
                      const double xa = x[i * sa], xb = z[i * sb];
                      adj[ia][i * sa] += g[i] * da(xa, xb, y[i]);
                      adj[ib][i * sb] += g[i] * db(xa, xb, y[i]);
                    }
                  });
}

// y = f(a) elementwise; d gives dy/da given (a, y).
template <class F, class D>
TapeValue unary(const char* op, const TapeValue& a, F f, D d) {
  Tape& t = a.tape();
  const auto av = a.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i]);
  return t.record(op, std::move(y), {a},
                  [d](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const std::size_t ia = tp.parent(self, 0);
                    const auto& x = tp.value(ia);
                    const auto& y = tp.value(self);
                    const auto& g = adj[self];
                    auto& ga = adj[ia];
                    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * d(x[i], y[i]);
                  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

TapeValue add(const TapeValue& a, const TapeValue& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

TapeValue sub(const TapeValue& a, const TapeValue& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

TapeValue mul(const TapeValue& a, const TapeValue& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

TapeValue div(const TapeValue& a, const TapeValue& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

TapeValue neg(const TapeValue& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

TapeValue exp(const TapeValue& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

TapeValue log(const TapeValue& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

TapeValue sigmoid(const TapeValue& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

TapeValue tanh(const TapeValue& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

TapeValue square(const TapeValue& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

TapeValue one_minus(const TapeValue& a) {
  return unary(
      "one_minus", a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

TapeValue scale(const TapeValue& a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

TapeValue shift(const TapeValue& a, double c) {
  return unary(
      "shift", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

TapeValue clamp(const TapeValue& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

TapeValue clamp_st(const TapeValue& a, double lo, double hi) {
  return unary(
      "clamp_st", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [](double, double) { return 1.0; });
}

TapeValue mul_const(const TapeValue& a, std::shared_ptr<const std::vector<double>> c) {
  Tape& t = a.tape();
  const auto av = a.values();
  if (c->size() != av.size()) throw UsageError("mul_const: size mismatch");
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * (*c)[i];
  return t.record("mul_const", std::move(y), {a},
                  [c](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const std::size_t ia = tp.parent(self, 0);
                    const auto& g = adj[self];
                    auto& ga = adj[ia];
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*c)[i];
                  });
}

TapeValue sum(const TapeValue& a) {
  Tape& t = a.tape();
  const auto av = a.values();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  return t.record("sum", {s}, {a}, [](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
    const double g = adj[self][0];
    for (double& x : adj[tp.parent(self, 0)]) x += g;
  });
}

TapeValue mean(const TapeValue& a) {
  const std::size_t n = a.size();
  if (n == 0) throw UsageError("mean: empty vector");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

TapeValue dot(const TapeValue& a, const TapeValue& b) {
  if (a.size() != b.size()) throw UsageError("dot: size mismatch");
  return sum(mul(a, b));
}

TapeValue gather(const TapeValue& a, std::shared_ptr<const std::vector<std::uint32_t>> index) {
  Tape& t = a.tape();
  const auto av = a.values();
  std::vector<double> y(index->size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto k = (*index)[i];
    if (k >= av.size()) throw UsageError("gather: index out of range");
    y[i] = av[k];
  }
  return t.record("gather", std::move(y), {a},
                  [index](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    auto& ga = adj[tp.parent(self, 0)];
                    for (std::size_t i = 0; i < g.size(); ++i) ga[(*index)[i]] += g[i];
                  });
}

TapeValue spmv(std::shared_ptr<const Csr> m, const TapeValue& a) {
  Tape& t = a.tape();
  const auto av = a.values();
  const std::size_t n = m->rows();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::uint64_t k = m->row_ptr[i]; k < m->row_ptr[i + 1]; ++k)
      s += static_cast<double>(m->weight[k]) * av[m->col[k]];
    y[i] = s;
  }
  return t.record("spmv", std::move(y), {a},
                  [m](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    auto& ga = adj[tp.parent(self, 0)];
                    const std::size_t rows = m->rows();
                    for (std::size_t i = 0; i < rows; ++i) {
                      const double gi = g[i];
                      if (gi == 0.0) continue;
                      for (std::uint64_t k = m->row_ptr[i]; k < m->row_ptr[i + 1]; ++k)
                        ga[m->col[k]] += static_cast<double>(m->weight[k]) * gi;
                    }
                  });
}

TapeValue matvec(const TapeValue& w, const TapeValue& x, std::size_t rows) {
  Tape& t = w.tape();
  const auto wv = w.values();
  const auto xv = x.values();
  const std::size_t cols = xv.size();
  if (wv.size() != rows * cols) throw UsageError("matvec: shape mismatch");
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += wv[r * cols + c] * xv[c];
    y[r] = s;
  }
  return t.record("matvec", std::move(y), {w, x},
                  [rows, cols](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const std::size_t iw = tp.parent(self, 0);
                    const std::size_t ix = tp.parent(self, 1);
                    const auto& wv = tp.value(iw);
                    const auto& xv = tp.value(ix);
                    const auto& g = adj[self];
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        adj[iw][r * cols + c] += g[r] * xv[c];
                        adj[ix][c] += g[r] * wv[r * cols + c];
                      }
                    }
                  });
}

TapeValue slice(const TapeValue& a, std::size_t offset, std::size_t len) {
  Tape& t = a.tape();
  const auto av = a.values();
  if (offset + len > av.size()) throw UsageError("slice: out of range");
  std::vector<double> y(av.begin() + offset, av.begin() + offset + len);
  return t.record("slice", std::move(y), {a},
                  [offset](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    auto& ga = adj[tp.parent(self, 0)];
                    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
                  });
}

TapeValue concat(const std::vector<TapeValue>& parts) {
  if (parts.empty()) throw UsageError("concat: no operands");
  Tape& t = parts.front().tape();
  std::vector<double> y;
  for (const auto& p : parts) {
    const auto v = p.values();
    y.insert(y.end(), v.begin(), v.end());
  }
  return t.record("concat", std::move(y), parts,
                  [](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    std::size_t off = 0;
                    for (std::size_t k = 0; off < g.size(); ++k) {
                      auto& ga = adj[tp.parent(self, k)];
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[off + i];
                      off += ga.size();
                    }
                  });
}

TapeValue broadcast(const TapeValue& scalar, std::size_t n) {
  Tape& t = scalar.tape();
  const double v = scalar.scalar();
  return t.record("broadcast", std::vector<double>(n, v), {scalar},
                  [](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    adj[tp.parent(self, 0)][0] += std::accumulate(g.begin(), g.end(), 0.0);
                  });
}

TapeValue window_sum(const TapeValue& a, std::size_t window) {
  if (window == 0) throw UsageError("window_sum: zero window");
  Tape& t = a.tape();
  const auto av = a.values();
  const std::size_t n = av.size() / window;
  std::vector<double> y(n, 0.0);
  for (std::size_t w = 0; w < n; ++w)
    for (std::size_t k = 0; k < window; ++k) y[w] += av[w * window + k];
  return t.record("window_sum", std::move(y), {a},
                  [window](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& g = adj[self];
                    auto& ga = adj[tp.parent(self, 0)];
                    for (std::size_t w = 0; w < g.size(); ++w)
                      for (std::size_t k = 0; k < window; ++k) ga[w * window + k] += g[w];
                  });
}

TapeValue softmax(const TapeValue& a) {
  Tape& t = a.tape();
  const auto av = a.values();
  if (av.empty()) throw UsageError("softmax: empty vector");
  const double m = *std::max_element(av.begin(), av.end());
  std::vector<double> y(av.size());
  double z = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) z += (y[i] = std::exp(av[i] - m));
  for (double& v : y) v /= z;
  return t.record("softmax", std::move(y), {a},
                  [](const Tape& tp, std::size_t self, Tape::Adjoints& adj) {
                    const auto& y = tp.value(self);
                    const auto& g = adj[self];
                    double inner = 0.0;
                    for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
                    auto& ga = adj[tp.parent(self, 0)];
                    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - inner);
                  });
}

TapeValue mse(const TapeValue& a, const TapeValue& b) {
  if (a.size() != b.size()) throw UsageError("mse: size mismatch");
  return mean(square(sub(a, b)));
}

}  // namespace abmsim::ad
