#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "abmsim/core/error.hpp"
#include "abmsim/popgen/io.hpp"
#include "abmsim/popgen/ipf.hpp"
#include "abmsim/popgen/synthesis.hpp"

using namespace abmsim;

namespace {

MarginalTable table(std::string axis, std::vector<std::string> bins, std::vector<double> counts) {
  return {std::move(axis), std::move(bins), std::move(counts)};
}

std::vector<MarginalTable> small_marginals() {
  return {table("borough", {"a", "b", "c"}, {50, 30, 20}),
          table("age_band", {"0t17", "18t64", "65t99"}, {20, 60, 20}),
          table("gender", {"f", "m"}, {55, 45})};
}

}  // namespace

TEST(Ipf, OnesSeedConvergesToProductOfMarginals) {
  const auto m = small_marginals();
  auto fit = ipf_fit(JointTable::ones_like(m), m, 1e-10, 1000);
  EXPECT_LE(fit.residual(), 1e-10);
  const auto shape = fit.table.shape();
  ASSERT_EQ(shape, (std::vector<std::size_t>{3, 3, 2}));
  // The maximum-entropy fit from a uniform seed is the independent joint.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        const double expect = m[0].counts[i] * m[1].counts[j] * m[2].counts[k] / (100.0 * 100.0);
        EXPECT_NEAR(fit.table.cells[(i * 3 + j) * 2 + k], expect, 1e-8);
      }
}

TEST(Ipf, ResidualHistoryNonIncreasing) {
  const auto m = small_marginals();
  auto seed = JointTable::ones_like(m);
  for (std::size_t c = 0; c < seed.cells.size(); ++c) seed.cells[c] = 1.0 + static_cast<double>(c % 5);
  auto fit = ipf_fit(seed, m, 1e-12, 1000);
  for (std::size_t i = 1; i < fit.residual_history.size(); ++i)
    EXPECT_LE(fit.residual_history[i], fit.residual_history[i - 1] + 1e-15);
}

TEST(Ipf, ZeroSeedCellsStayZero) {
  const auto m = small_marginals();
  auto seed = JointTable::ones_like(m);
  seed.cells[0] = 0.0;
  auto fit = ipf_fit(seed, m, 1e-9, 5000);
  EXPECT_EQ(fit.table.cells[0], 0.0);
  EXPECT_LE(fit.residual(), 1e-9);
}

TEST(Ipf, InfeasibleWhenTargetBinHasNoSupport) {
  auto m = small_marginals();
  auto seed = JointTable::ones_like(m);
  // remove every cell of borough "a"
  std::fill(seed.cells.begin(), seed.cells.begin() + 6, 0.0);
  EXPECT_THROW(ipf_fit(seed, m, 1e-9, 100), InfeasibleError);
}

TEST(Ipf, MismatchedTotalsRescaledWithWarning) {
  auto m = small_marginals();
  m[2].counts = {110, 90};
  auto fit = ipf_fit(JointTable::ones_like(m), m, 1e-9, 1000);
  EXPECT_FALSE(fit.warnings.empty());
  EXPECT_LE(fit.residual(), 1e-9);
}

TEST(Ipf, NonConvergenceCarriesResidual) {
  const auto m = small_marginals();
  auto seed = JointTable::ones_like(m);
  for (std::size_t c = 0; c < seed.cells.size(); ++c) seed.cells[c] = 1.0 + static_cast<double>(c * c % 7);
  try {
    ipf_fit(seed, m, 1e-15, 1);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Ipf, MarginalValidation) {
  EXPECT_THROW(table("gender", {"f", "f"}, {1, 1}).validate(), SchemaError);
  EXPECT_THROW(table("gender", {"f", "m"}, {1, -1}).validate(), SchemaError);
  EXPECT_THROW(table("gender", {"f", "m"}, {0, 0}).validate(), SchemaError);
  EXPECT_THROW(table("gender", {}, {}).validate(), SchemaError);
}

TEST(Synthesis, SampleMatchesMarginalsAndHouseholds) {
  const auto m = small_marginals();
  HouseholdSizeDist hh{{0.3, 0.3, 0.2, 0.2}};
  auto pop = synthesize_population(m, 20000, hh, 11);
  ASSERT_EQ(pop.size(), 20000u);
  pop.validate();
  std::map<std::string, int> boroughs;
  for (std::size_t i = 0; i < pop.size(); ++i) ++boroughs[pop.label(Attribute::borough, i)];
  EXPECT_NEAR(boroughs["a"] / 20000.0, 0.5, 0.02);
  EXPECT_NEAR(boroughs["c"] / 20000.0, 0.2, 0.02);
  // households are contiguous, share a borough and respect the max size
  std::map<std::uint32_t, std::set<std::string>> hb;
  std::map<std::uint32_t, int> sizes;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    hb[pop.household_id[i]].insert(pop.label(Attribute::borough, i));
    ++sizes[pop.household_id[i]];
  }
  for (auto& [h, b] : hb) EXPECT_EQ(b.size(), 1u);
  for (auto& [h, s] : sizes) EXPECT_LE(s, 4);
  // absent axes get "na"
  EXPECT_EQ(pop.label(Attribute::occupation, 0), "na");
}

TEST(Synthesis, DeterministicInSeed) {
  const auto m = small_marginals();
  auto a = synthesize_population(m, 500, HouseholdSizeDist::point_mass(3), 5);
  auto b = synthesize_population(m, 500, HouseholdSizeDist::point_mass(3), 5);
  auto c = synthesize_population(m, 500, HouseholdSizeDist::point_mass(3), 6);
  EXPECT_TRUE(same_agents(a, b));
  EXPECT_FALSE(same_agents(a, c));
}

TEST(Synthesis, DefaultMarginalsFit) {
  auto pop = synthesize_population(default_marginals(), 2000, default_household_sizes(), 1);
  EXPECT_EQ(pop.size(), 2000u);
  EXPECT_EQ(pop.vocabulary(Attribute::borough).size(), 5u);
}

TEST(Graph, SymmetricNoSelfLoopsHouseholdCliques) {
  auto pop = synthesize_population(default_marginals(), 3000, default_household_sizes(), 2);
  GraphConfig cfg;
  auto g = build_contact_graph(pop, cfg, 2);
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const Csr& m = g.layers[l];
    ASSERT_EQ(m.rows(), pop.size());
    std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (std::uint32_t i = 0; i < m.rows(); ++i)
      for (auto k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) {
        EXPECT_NE(m.col[k], i);
        edges.insert({i, m.col[k]});
      }
    for (auto [a, b] : edges) EXPECT_TRUE(edges.count({b, a})) << "layer " << l;
  }
  const Csr& hh = g.layer(Layer::household);
  for (std::uint32_t i = 0; i < hh.rows(); ++i) {
    std::size_t members = 0;
    for (std::size_t j = 0; j < pop.size(); ++j)
      if (j != i && pop.household_id[j] == pop.household_id[i]) ++members;
    if (i < 200) EXPECT_EQ(hh.degree(i), members);
    if (i >= 200) break;
  }
}

TEST(Graph, WorkplaceExemptOccupations) {
  auto pop = synthesize_population(default_marginals(), 3000, default_household_sizes(), 3);
  auto g = build_contact_graph(pop, GraphConfig{}, 3);
  const Csr& w = g.layer(Layer::workplace);
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (pop.label(Attribute::occupation, i) == "none") EXPECT_EQ(w.degree(i), 0u);
}

TEST(Graph, MeanDegreeNearTarget) {
  auto pop = synthesize_population(default_marginals(), 20000, default_household_sizes(), 4);
  GraphConfig cfg;
  cfg.workplace_mean_degree = 0.0;
  cfg.mobility_mean_degree = 6.0;
  auto g = build_contact_graph(pop, cfg, 4);
  const Csr& mob = g.layer(Layer::mobility);
  EXPECT_NEAR(static_cast<double>(mob.nnz()) / static_cast<double>(pop.size()), 6.0, 0.2);
}

TEST(Graph, PermutationRelabelsEdges) {
  auto pop = synthesize_population(small_marginals(), 300, HouseholdSizeDist::point_mass(2), 5);
  auto g = build_contact_graph(pop, GraphConfig{}, 5);
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  auto pg = permute(g, order);
  auto pp = permute(pop, order);
  EXPECT_EQ(pg.combined().nnz(), g.combined().nnz());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    EXPECT_EQ(pg.combined().degree(i), g.combined().degree(order[i]));
    EXPECT_EQ(pp.agent_id[i], pop.agent_id[order[i]]);
  }
}

TEST(PopulationCsv, RoundTrip) {
  auto pop = synthesize_population(default_marginals(), 400, default_household_sizes(), 6);
  std::stringstream ss;
  write_population_csv(pop, ss);
  auto back = read_population_csv(ss);
  EXPECT_TRUE(same_agents(pop, back));
}

TEST(PopulationCsv, SchemaErrors) {
  std::stringstream bad_header("agent_id,age_band,gender\n");
  EXPECT_THROW(read_population_csv(bad_header), SchemaError);
  std::stringstream bad_row(std::string(kPopulationCsvHeader) + "\n1,0t9,male,Bronx,0t1000\n");
  EXPECT_THROW(read_population_csv(bad_row), SchemaError);
  std::stringstream bad_int(std::string(kPopulationCsvHeader) + "\nx,0t9,male,Bronx,0t1000,none,0\n");
  EXPECT_THROW(read_population_csv(bad_int), SchemaError);
}

TEST(PopulationCsv, MarginalsJson) {
  auto m = parse_marginals_json(R"([{"axis":"gender","bins":["f","m"],"counts":[1,2]}])");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].counts[1], 2.0);
  EXPECT_THROW(parse_marginals_json(R"({"axis":"shoe","bins":["a"],"counts":[1]})"), SchemaError);
  EXPECT_THROW(parse_marginals_json(R"({"axis":"gender"})"), SchemaError);
}

TEST(Population, IncomeValue) {
  EXPECT_EQ(income_value("1000t3000"), 2000.0);
  EXPECT_EQ(income_value("750"), 750.0);
  EXPECT_FALSE(income_value("rich").has_value());
}
