#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/epi/model.hpp"
#include "abmsim/popgen/synthesis.hpp"

using namespace abmsim;

namespace {

Population uniform_population(std::size_t n, std::vector<std::string> ages = {"30t39"}) {
  std::vector<MarginalTable> m{{"age_band", ages, std::vector<double>(ages.size(), 1.0)},
                               {"borough", {"x"}, {1.0}}};
  auto pop = synthesize_population(m, n, HouseholdSizeDist::point_mass(1), 1);
  pop.reset_dynamic();
  return pop;
}

Csr complete_graph(std::size_t n) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) e.push_back({i, j});
  return csr_from_edges(n, e, 1.0f);
}

}  // namespace

TEST(Kernel, InfectionProbabilityClosedForm) {
  EXPECT_NEAR(infection_probability(0.3, 1.0, 10.0, 4.0, 1.0), 1.0 - std::exp(-0.12), 1e-15);
  EXPECT_NEAR(infection_probability(0.5, 0.5, 4.0, 1.0, 0.5), 1.0 - std::exp(-0.03125), 1e-15);
  EXPECT_EQ(infection_probability(0.5, 1.0, 0.0, 0.0, 1.0), 0.0);
  EXPECT_THROW(infection_probability(0.5, 1.0, 0.0, 1.0, 1.0), UsageError);
  EXPECT_THROW(infection_probability(-0.5, 1.0, 1.0, 1.0, 1.0), DomainError);
  // tiny rates stay accurate
  EXPECT_NEAR(infection_probability(1e-12, 1.0, 1.0, 1.0, 1.0), 1e-12, 1e-24);
}

TEST(Kernel, R0BetaRoundTrip) {
  for (double r0 : {0.0, 1.5, 3.2, 8.0}) EXPECT_DOUBLE_EQ(r0_from_beta(beta_from_r0(r0, 7, 1.0), 7, 1.0), r0);
  EXPECT_DOUBLE_EQ(beta_from_r0(3.5, 7, 0.5), 1.0);
  EXPECT_THROW(beta_from_r0(-1.0, 7, 1.0), DomainError);
}

TEST(Kernel, IsolationMasksInfectious) {
  auto out = apply_isolation(std::vector<double>{1, 1, 0, 1}, std::vector<double>{0, 1, 1, 0.25});
  EXPECT_EQ(out, (std::vector<double>{1, 0, 0, 0.75}));
  ad::Tape t;
  ad::Param a("a", {0.0, 0.5}, 0, 1);
  auto y = ad::sum(apply_isolation(t.constant({1.0, 2.0}), t.param(a)));
  EXPECT_EQ(t.backward(y).at("a"), (std::vector<double>{-1.0, -2.0}));
}

TEST(Exposure, FrequencyMatchesProbability) {
  const std::size_t n = 2001;
  auto pop = uniform_population(n);
  // star: agent 0 infectious, everyone else linked to agent 0 only
  std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
  for (std::uint32_t i = 1; i < n; ++i) e.push_back({0, i});
  auto g = csr_from_edges(n, e, 1.0f);
  pop.stage[0] = Stage::I;
  std::vector<double> x(n, 0.0);
  x[0] = 1.0;
  EpiParams params;
  auto r = exposure_step(g, pop, params, x, {}, 0.4, 3, 0, 2);
  const double p = 1.0 - std::exp(-0.4);
  EXPECT_NEAR(r.expected, p * (n - 1), 1e-9);
  EXPECT_NEAR(r.expected_dbeta, std::exp(-0.4) * (n - 1), 1e-9);
  EXPECT_NEAR(static_cast<double>(r.count), p * (n - 1), 4 * std::sqrt(p * (1 - p) * (n - 1)));
  EXPECT_EQ(r.exposed[0], 0);
}

TEST(Exposure, VaccineEfficacyReducesRate) {
  const std::size_t n = 3;
  auto pop = uniform_population(n);
  auto g = complete_graph(n);
  pop.stage[0] = Stage::I;
  std::vector<double> x{1.0, 0.0, 0.0};
  EpiParams params;
  auto r = exposure_step(g, pop, params, x, std::vector<double>{0.0, 0.9, 0.0}, 1.0, 1, 0);
  const double p_full = 1.0 - std::exp(-0.5), p_vax = 1.0 - std::exp(-0.05);
  EXPECT_NEAR(r.expected, p_full + p_vax, 1e-12);
}

TEST(Exposure, ThreadCountInvariant) {
  const std::size_t n = 30000;
  auto pop = uniform_population(n);
  GraphConfig gc;
  gc.mobility_mean_degree = 6;
  gc.workplace_mean_degree = 0;
  auto g = build_contact_graph(pop, gc, 2).combined();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; i += 10) {
    pop.stage[i] = Stage::I;
    x[i] = 1.0;
  }
  EpiParams params;
  auto a = exposure_step(g, pop, params, x, {}, 0.5, 9, 4, 1);
  auto b = exposure_step(g, pop, params, x, {}, 0.5, 9, 4, 7);
  EXPECT_EQ(a.exposed, b.exposed);
  EXPECT_EQ(a.expected, b.expected);
}

TEST(Progression, TimersAndConservation) {
  auto pop = uniform_population(100);
  EpiParams params;
  params.latent_period = 2;
  params.infectious_period = 3;
  params.mortality = {1.0};
  std::vector<std::uint8_t> exposed(100, 0), onset;
  exposed[5] = 1;
  apply_exposures(pop, params, exposed, onset);
  EXPECT_EQ(pop.stage[5], Stage::E);
  std::vector<Stage> history;
  for (int t = 1; t <= 6; ++t) {
    seirm_progress(pop, params, 1, t);
    history.push_back(pop.stage[5]);
  }
  EXPECT_EQ(history, (std::vector<Stage>{Stage::E, Stage::I, Stage::I, Stage::I, Stage::M, Stage::M}));
  std::size_t counts[5] = {};
  for (auto s : pop.stage) ++counts[static_cast<int>(s)];
  EXPECT_EQ(counts[0] + counts[4], 100u);
}

TEST(Progression, ZeroLatentGoesStraightToI) {
  auto pop = uniform_population(10);
  EpiParams params;
  params.latent_period = 0;
  std::vector<std::uint8_t> exposed(10, 0), onset;
  exposed[2] = exposed[3] = 1;
  EXPECT_EQ(apply_exposures(pop, params, exposed, onset), 2u);
  EXPECT_EQ(pop.stage[2], Stage::I);
  EXPECT_EQ(onset[3], 1);
}

TEST(Progression, MortalityByAge) {
  auto pop = uniform_population(40000, {"20t29", "80t99"});
  EpiParams params;
  params.mortality = {0.0, 0.2};
  for (std::size_t i = 0; i < pop.size(); ++i) {
    pop.stage[i] = Stage::I;
    pop.stage_timer[i] = 1;
  }
  auto c = seirm_progress(pop, params, 4, 0, 3);
  std::size_t young_dead = 0, old = 0, old_dead = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const bool is_old = pop.label(Attribute::age_band, i) == "80t99";
    old += is_old;
    if (pop.stage[i] == Stage::M) (is_old ? old_dead : young_dead)++;
  }
  EXPECT_EQ(young_dead, 0u);
  EXPECT_NEAR(static_cast<double>(old_dead) / old, 0.2, 0.015);
  EXPECT_EQ(c.deaths, old_dead);
}

TEST(Vaccination, SupplyGapAndDropout) {
  auto pop = uniform_population(1000);
  VaccineProtocol vp;
  vp.enabled = true;
  vp.daily_supply = 50;
  vp.dose_gap = 5;
  vp.second_dose_dropout = 0.2;
  VaccinationSchedule s(pop, vp, 3);
  std::size_t total = 0;
  for (int t = 0; t < 60; ++t) {
    const auto given = s.step(pop, t);
    EXPECT_LE(given, 50u);
    total += given;
  }
  EXPECT_EQ(s.first_doses(), 1000u);
  EXPECT_EQ(total, s.first_doses() + s.second_doses());
  EXPECT_NEAR(static_cast<double>(s.second_doses()) / 1000.0, 0.8, 0.05);
  for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_LE(pop.doses_received[i], 2);
  // a fresh schedule with the same seed gives the same order
  auto pop2 = uniform_population(1000);
  VaccinationSchedule s2(pop2, vp, 3);
  for (int t = 0; t < 60; ++t) s2.step(pop2, t);
  EXPECT_EQ(pop.doses_received, pop2.doses_received);
  EXPECT_EQ(pop.last_dose_step, pop2.last_dose_step);
}

TEST(Vaccination, SecondDoseRespectsGap) {
  auto pop = uniform_population(10);
  VaccineProtocol vp;
  vp.enabled = true;
  vp.daily_supply = 10;
  vp.dose_gap = 7;
  VaccinationSchedule s(pop, vp, 1);
  s.step(pop, 0);
  for (int t = 1; t < 7; ++t) EXPECT_EQ(s.step(pop, t), 0u);
  EXPECT_EQ(s.step(pop, 7), 10u);
  EXPECT_EQ(s.second_doses(), 10u);
}

TEST(Testing, SensitivityAndForcedIsolation) {
  auto pop = uniform_population(20000);
  EpiParams params;
  params.infectious_period = 5;
  TestProtocol tp;
  tp.enabled = true;
  tp.sensitivity = 0.8;
  tp.result_delay = 2;
  TestingState st;
  std::vector<std::uint8_t> onset(pop.size(), 0);
  for (std::size_t i = 0; i < 10000; ++i) {
    pop.stage[i] = Stage::I;
    onset[i] = 1;
  }
  auto c = testing_step(pop, tp, params, onset, st, 5, 10);
  EXPECT_EQ(c.tests, 10000u);
  EXPECT_NEAR(c.true_positives / 10000.0, 0.8, 0.015);
  EXPECT_EQ(c.false_positives, 0u);
  std::size_t i = 0;
  while (st.result_step[i] < 0) ++i;
  EXPECT_FALSE(st.forced(i, 11));
  EXPECT_TRUE(st.forced(i, 12));
  EXPECT_TRUE(st.forced(i, 15));
  EXPECT_FALSE(st.forced(i, 16));
}

TEST(Testing, ScreeningFalsePositives) {
  auto pop = uniform_population(20000);
  EpiParams params;
  TestProtocol tp;
  tp.enabled = true;
  tp.specificity = 0.9;
  tp.screening_rate = 0.5;
  TestingState st;
  std::vector<std::uint8_t> onset(pop.size(), 0);
  auto c = testing_step(pop, tp, params, onset, st, 5, 0);
  EXPECT_NEAR(c.tests / 20000.0, 0.5, 0.015);
  EXPECT_NEAR(static_cast<double>(c.false_positives) / c.tests, 0.1, 0.01);
}

TEST(Stimulus, PaymentsAndChildren) {
  std::vector<MarginalTable> m{{"age_band", {"0t9", "30t39"}, {1, 1}},
                               {"income_band", {"low", "high"}, {1, 1}}};
  auto pop = synthesize_population(m, 2000, HouseholdSizeDist::point_mass(4), 2);
  StimulusSchedule sched;
  sched.events.push_back({10, 1200.0, 500.0, {"low"}});
  const auto kids = child_age_codes(pop, sched);
  const auto per_hh = children_per_household(pop, kids);
  auto pay = stimulus_step(pop, sched, 10, kids, per_hh);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const bool child = pop.label(Attribute::age_band, i) == "0t9";
    const bool low = pop.label(Attribute::income_band, i) == "low";
    const double expect = child || !low ? 0.0 : 1200.0 + 500.0 * per_hh[pop.household_id[i]];
    ASSERT_DOUBLE_EQ(pay[i], expect);
  }
  auto none = stimulus_step(pop, sched, 11, kids, per_hh);
  EXPECT_EQ(std::accumulate(none.begin(), none.end(), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(sched.month_payment(10), 1200.0);
  EXPECT_DOUBLE_EQ(sched.month_payment(39), 1200.0);
  EXPECT_DOUBLE_EQ(sched.month_payment(40), 0.0);
  EXPECT_DOUBLE_EQ(sched.month_payment(9), 0.0);
  EXPECT_THROW(sched.validate(5), DomainError);
}
