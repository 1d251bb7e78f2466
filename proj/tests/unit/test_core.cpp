#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "abmsim/core/adam.hpp"
#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/core/parallel.hpp"
#include "abmsim/core/rng.hpp"
#include "abmsim/core/stochastic.hpp"

using namespace abmsim;
using namespace abmsim::ad;

// Published Philox4x32-10 known-answer vectors.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, PureFunctionOfKey) {
  RngStream a(42, 3, 17, Channel::exposure), b(42, 3, 17, Channel::exposure);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(42, 3, 17, Channel::behavior);
  RngStream d(42, 3, 17, Channel::exposure);
  EXPECT_NE(c.next_u64(), d.next_u64());
  RngStream e(42, 4, 17, Channel::exposure);
  RngStream f(42, 3, 18, Channel::exposure);
  RngStream g(42, 3, 17, Channel::exposure);
  const auto x = g.next_u64();
  EXPECT_NE(e.next_u64(), x);
  EXPECT_NE(f.next_u64(), x);
}

TEST(RngStream, UniformMoments) {
  RngStream r(1, 0, 0, Channel::exposure);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
}

TEST(RngStream, GumbelMean) {
  RngStream r(5, 0, 0, Channel::gumbel);
  double s = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) s += r.gumbel();
  EXPECT_NEAR(s / n, 0.5772156649, 0.01);
}

TEST(Parallel, ChunkedReductionIndependentOfThreads) {
  const std::size_t n = 100000;
  auto run = [&](unsigned threads) {
    std::vector<double> partial(parallel_chunks(n, threads), 0.0);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e, unsigned c) {
      for (std::size_t i = b; i < e; ++i) {
        RngStream r(9, 0, i, Channel::exposure);
        partial[c] += r.uniform() < 0.3 ? 1.0 : 0.0;
      }
    });
    double total = 0;
    for (double p : partial) total += p;
    return total;
  };
  EXPECT_EQ(run(1), run(4));
  EXPECT_EQ(run(1), run(13));
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(100000, 4,
                            [](std::size_t b, std::size_t, unsigned) {
                              if (b > 0) throw UsageError("boom");
                            }),
               UsageError);
}

namespace {

// Central finite difference of f at x along coordinate i.
double fd(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
          std::size_t i, double h = 1e-6) {
  x[i] += h;
  const double up = f(x);
  x[i] -= 2 * h;
  const double dn = f(x);
  return (up - dn) / (2 * h);
}

using Builder = std::function<TapeValue(Tape&, const TapeValue&)>;

void check_gradient(const Builder& build, const std::vector<double>& x0, double tol = 1e-6) {
  Tape tape;
  Param p("x", x0, -1e9, 1e9);
  auto out = build(tape, tape.param(p));
  const auto grads = tape.backward(out);
  auto f = [&](const std::vector<double>& x) {
    Tape t;
    return build(t, t.constant(x)).scalar();
  };
  ASSERT_TRUE(grads.count("x"));
  for (std::size_t i = 0; i < x0.size(); ++i)
    EXPECT_NEAR(grads.at("x")[i], fd(f, x0, i), tol) << "coordinate " << i;
}

}  // namespace

TEST(Tape, ElementwiseGradients) {
  const std::vector<double> x{0.3, -0.7, 1.2};
  check_gradient([](Tape&, const TapeValue& x) { return sum(exp(x) * x); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return sum(sigmoid(x) + tanh(x)); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return sum(square(x) / (x + 3.0)); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return sum(log(x + 2.0) - one_minus(x)); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return dot(x, x * 2.0); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return mean(softmax(x) * x); }, x);
}

TEST(Tape, StructuralGradients) {
  const std::vector<double> x{0.5, 1.5, -2.0, 0.25};
  check_gradient(
      [](Tape& t, const TapeValue& x) { return mse(slice(x, 1, 2), t.constant({1.0, 2.0})); }, x);
  check_gradient([](Tape&, const TapeValue& x) { return sum(square(window_sum(x, 2))); }, x);
  check_gradient(
      [](Tape&, const TapeValue& x) { return sum(square(concat({x, slice(x, 0, 1)}))); }, x);
  check_gradient(
      [](Tape&, const TapeValue& x) {
        auto idx = std::make_shared<const std::vector<std::uint32_t>>(std::vector<std::uint32_t>{3, 0, 0});
        return sum(square(gather(x, idx)));
      },
      x);
  check_gradient(
      [](Tape& t, const TapeValue& x) {
        auto w = t.constant({1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 1.0, 1.0});
        return sum(square(matvec(w, x, 2)));
      },
      x);
  check_gradient([](Tape&, const TapeValue& x) { return sum(broadcast(sum(x), 3) * slice(x, 0, 1)); }, x);
}

TEST(Tape, SpmvGradient) {
  auto m = std::make_shared<Csr>();
  m->row_ptr = {0, 2, 3, 5};
  m->col = {1, 2, 0, 0, 1};
  m->weight = {1.0f, 2.0f, 0.5f, 1.5f, 1.0f};
  check_gradient([m](Tape&, const TapeValue& x) { return sum(square(spmv(m, x))); },
                 {0.2, -0.4, 0.9});
}

TEST(Tape, BroadcastScalarOperand) {
  Tape t;
  auto a = t.constant({1.0, 2.0, 3.0});
  auto b = t.constant(2.0);
  auto c = a * b;
  EXPECT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[2], 6.0);
  EXPECT_THROW(a + t.constant({1.0, 2.0}), UsageError);
}

TEST(Tape, StaleHandleAfterClear) {
  Tape t;
  auto a = t.constant(1.0);
  t.clear();
  EXPECT_THROW((void)a.values(), UsageError);
}

TEST(Tape, ClampZeroGradientOutside) {
  Tape t;
  Param p("x", {-0.5, 0.5, 1.5}, -10, 10);
  auto out = sum(clamp(t.param(p), 0.0, 1.0));
  const auto g = t.backward(out).at("x");
  EXPECT_EQ(g, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Stochastic, BernoulliStraightThrough) {
  Tape t;
  Param p("p", {0.2, 0.9}, 0, 1);
  const std::vector<double> u{0.1, 0.95};
  auto b = bernoulli_st(t.param(p), u);
  EXPECT_EQ(b[0], 1.0);
  EXPECT_EQ(b[1], 0.0);
  const auto g = t.backward(sum(b)).at("p");
  EXPECT_EQ(g, (std::vector<double>{1.0, 1.0}));
  EXPECT_THROW(bernoulli_st(t.constant({1.5}), std::vector<double>{0.3}), DomainError);
}

TEST(Stochastic, BernoulliFrequency) {
  Tape t;
  RngStream r(3, 0, 0, Channel::behavior);
  auto p = t.constant(std::vector<double>(100000, 0.37));
  auto b = bernoulli_st(p, r);
  EXPECT_NEAR(sum(b).scalar() / 100000.0, 0.37, 0.006);
}

TEST(Stochastic, CategoricalHardIsOneHot) {
  Tape t;
  RngStream r(4, 0, 0, Channel::gumbel);
  auto probs = t.constant({0.2, 0.5, 0.3});
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 20000; ++i) {
    auto s = categorical_st(probs, r);
    double total = 0;
    for (double v : s.sample.values()) total += v;
    ASSERT_EQ(total, 1.0);
    ASSERT_EQ(s.sample[s.index], 1.0);
    ++counts[s.index];
  }
  EXPECT_NEAR(counts[1] / 20000.0, 0.5, 0.015);
  EXPECT_THROW(categorical_st(t.constant({0.5, 0.6}), r), DomainError);
}

TEST(Stochastic, GumbelSoftmaxOnSimplex) {
  Tape t;
  auto probs = t.constant({0.1, 0.6, 0.3});
  const std::vector<double> noise{0.3, -0.2, 1.1};
  for (double temp : {0.05, 0.5, 5.0}) {
    auto y = gumbel_softmax(probs, noise, temp);
    double s = 0;
    for (double v : y.values()) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Stochastic, SoftCompareComplementExact) {
  Tape t;
  for (double x : {-3.0, -0.1, 0.0, 0.4, 7.0}) {
    for (double y : {-1.0, 0.0, 0.4, 2.5}) {
      auto a = soft_compare(t.constant(x), t.constant(y));
      auto b = soft_compare(t.constant(y), t.constant(x));
      EXPECT_EQ(a.scalar() + b.scalar(), 1.0) << x << " " << y;
    }
  }
}

TEST(Stochastic, SoftLogicalTruthTable) {
  Tape t;
  for (double a : {0.0, 1.0})
    for (double b : {0.0, 1.0}) {
      EXPECT_EQ(soft_logical(t.constant(a), t.constant(b), LogicalKind::logical_and).scalar(),
                a * b);
      EXPECT_EQ(soft_logical(t.constant(a), t.constant(b), LogicalKind::logical_or).scalar(),
                std::max(a, b));
    }
}

TEST(Adam, ConvergesOnQuadraticAndRespectsBounds) {
  ParamSet ps;
  ps.add(Param("x", {3.0, -0.5}, -1.0, 10.0));
  AdamState st;
  for (int i = 0; i < 2000; ++i) {
    Tape t;
    auto x = t.param(ps.at("x"));
    auto loss = sum(square(x - t.constant({1.0, -5.0})));
    adam_step(ps, t.backward(loss), st, 0.05);
  }
  EXPECT_NEAR(ps.at("x").value[0], 1.0, 1e-3);
  EXPECT_EQ(ps.at("x").value[1], -1.0);  // projected onto the bound
}

TEST(Adam, RejectsNonFiniteGradient) {
  ParamSet ps;
  ps.add(Param("x", 0.0, -1, 1));
  AdamState st;
  Gradients g{{"x", {std::nan("")}}};
  EXPECT_THROW(adam_step(ps, g, st, 0.1), NumericError);
}
