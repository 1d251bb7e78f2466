#include <gtest/gtest.h>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/labor/labor.hpp"

using namespace abmsim;

TEST(Labor, UnemploymentRateFormula) {
  std::vector<double> w{1, 0, 1, 1};
  std::vector<double> iur{0.1, 0.3};
  EXPECT_DOUBLE_EQ(unemployment_rate(w, -0.4, 1.0, iur, 0), std::max(0.0, -0.4 * 0.75 + 0.1));
  EXPECT_DOUBLE_EQ(unemployment_rate(w, -0.1, 1.0, iur, 1), -0.1 * 0.75 + 0.3);
  EXPECT_DOUBLE_EQ(unemployment_rate(w, 0.0, 2.0, std::vector<double>{0.8}, 0), 1.0);
  EXPECT_THROW(unemployment_rate(w, -0.1, 1.0, iur, 2), UsageError);
}

TEST(Labor, TapedGradients) {
  ad::Tape t;
  ad::Param g0("g0", -0.2, kGamma0Lo, kGamma0Hi), g1("g1", 1.0, kGamma1Lo, kGamma1Hi);
  auto mu = unemployment_rate(t.constant(0.6), t.param(g0), t.param(g1), t.constant(0.3));
  EXPECT_DOUBLE_EQ(mu.scalar(), -0.2 * 0.6 + 0.3);
  const auto g = t.backward(mu);
  EXPECT_DOUBLE_EQ(g.at("g0")[0], 0.6);
  EXPECT_DOUBLE_EQ(g.at("g1")[0], 0.3);
}

TEST(Labor, ParamsValidation) {
  LaborParams p;
  p.validate();
  p.gamma0 = 0.5;
  EXPECT_THROW(p.validate(), DomainError);
  p.gamma0 = -0.5;
  p.iur = {1.5};
  EXPECT_THROW(p.validate(), DomainError);
  LaborParams q;
  q.iur = {0.1, 0.2};
  EXPECT_DOUBLE_EQ(q.iur_at(5), 0.2);
}

TEST(Labor, MonthBoundary) {
  EXPECT_EQ(month_boundary(0), 0);
  EXPECT_EQ(month_boundary(29), -1);
  EXPECT_EQ(month_boundary(60), 2);
}
