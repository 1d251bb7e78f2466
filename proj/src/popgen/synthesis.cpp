#include "abmsim/popgen/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "abmsim/core/error.hpp"
#include "abmsim/core/rng.hpp"

namespace abmsim {

HouseholdSizeDist HouseholdSizeDist::point_mass(std::size_t size) {
  if (size == 0) throw DomainError("household size must be >= 1");
  HouseholdSizeDist d;
  d.probs.assign(size, 0.0);
  d.probs.back() = 1.0;
  return d;
}

namespace {

std::size_t draw_household_size(const HouseholdSizeDist& d, RngStream& rng) {
  const double total = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < d.probs.size(); ++k) {
    acc += d.probs[k];
    if (u < acc) return k + 1;
  }
  return d.probs.size();
}

}  // namespace

Population sample_population(const JointTable& joint, std::size_t n,
                             const HouseholdSizeDist& households, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_population: N must be >= 1");
  if (joint.cells.empty() || !(joint.total() > 0.0))
    throw DomainError("sample_population: empty joint table");
  if (households.probs.empty() ||
      !(std::accumulate(households.probs.begin(), households.probs.end(), 0.0) > 0.0))
    throw DomainError("sample_population: empty household size distribution");

  // which joint axis (if any) backs each attribute
  std::array<int, kAttributeCount> axis_of{};
  axis_of.fill(-1);
  for (std::size_t k = 0; k < joint.axes.size(); ++k) {
    auto a = parse_attribute(joint.axes[k]);
    if (!a) throw SchemaError("joint axis '" + joint.axes[k] + "' is not an agent attribute");
    axis_of[static_cast<std::size_t>(*a)] = static_cast<int>(k);
  }

  Vocabularies vocab;
  for (std::size_t a = 0; a < kAttributeCount; ++a)
    vocab[a] = axis_of[a] >= 0 ? Vocabulary(joint.labels[static_cast<std::size_t>(axis_of[a])])
                               : Vocabulary({"na"});

  std::vector<double> cum(joint.cells.size());
  std::partial_sum(joint.cells.begin(), joint.cells.end(), cum.begin());
  const double total = cum.back();
  const auto shape = joint.shape();

  std::array<std::vector<std::uint16_t>, kAttributeCount> raw;
  for (auto& r : raw) r.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, 0, i, Channel::population);
    const double u = rng.uniform() * total;
    auto cell = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    cell = std::min(cell, cum.size() - 1);
    for (std::size_t k = shape.size(); k-- > 0;) {
      const auto code = static_cast<std::uint16_t>(cell % shape[k]);
      cell /= shape[k];
      auto a = parse_attribute(joint.axes[k]);
      raw[static_cast<std::size_t>(*a)][i] = code;
    }
  }

  // stable order by borough
  const auto& borough = raw[static_cast<std::size_t>(Attribute::borough)];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return borough[a] < borough[b]; });

  Population pop;
  pop.vocab = std::move(vocab);
  pop.agent_id.resize(n);
  std::iota(pop.agent_id.begin(), pop.agent_id.end(), 0);
  for (std::size_t a = 0; a < kAttributeCount; ++a) {
    pop.codes[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) pop.codes[a][i] = raw[a][order[i]];
  }

  pop.household_id.resize(n);
  const auto& bcodes = pop.codes[static_cast<std::size_t>(Attribute::borough)];
  std::uint32_t next_hh = 0;
  std::size_t i = 0;
  while (i < n) {
    const auto b = bcodes[i];
    RngStream rng(seed, 1, b, Channel::population);
    std::size_t end = i;
    while (end < n && bcodes[end] == b) ++end;
    while (i < end) {
      const std::size_t size = draw_household_size(households, rng);
      const std::size_t stop = std::min(end, i + size);
      for (; i < stop; ++i) pop.household_id[i] = next_hh;
      ++next_hh;
    }
  }
  pop.reset_dynamic();
  return pop;
}

std::vector<MarginalTable> default_marginals() {
  return {
      {"borough",
       {"Bronx", "Brooklyn", "Manhattan", "Queens", "Staten Island"},
       {1380, 2590, 1600, 2280, 490}},
      {"age_band",
       {"0t9", "10t19", "20t29", "30t39", "40t49", "50t59", "60t69", "70t79", "80t99"},
       {1150, 1050, 1450, 1420, 1100, 1050, 930, 600, 350}},
      {"gender", {"male", "female"}, {4800, 5200}},
      {"income_band",
       {"0t1000", "1000t3000", "3000t6000", "6000t10000", "10000t20000"},
       {1900, 2300, 2600, 1900, 1300}},
      {"occupation",
       {"none", "healthcare", "retail", "education", "office", "construction", "hospitality"},
       {3700, 1000, 900, 700, 2100, 600, 1000}},
  };
}

HouseholdSizeDist default_household_sizes() {
  return {{0.32, 0.28, 0.16, 0.13, 0.07, 0.04}};
}

Population synthesize_population(const std::vector<MarginalTable>& marginals, std::size_t n,
                                 const HouseholdSizeDist& households, std::uint64_t seed) {
  const auto fit = ipf_fit(JointTable::ones_like(marginals), marginals, 1e-9, 1000);
  return sample_population(fit.table, n, households, seed);
}

Csr csr_from_edges(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                   float weight) {
  Csr m;
  m.row_ptr.assign(n + 1, 0);
  for (const auto& [a, b] : edges) {
    if (a == b) throw DomainError("csr_from_edges: self loop");
    ++m.row_ptr[a + 1];
    ++m.row_ptr[b + 1];
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  m.col.resize(m.row_ptr[n]);
  m.weight.assign(m.row_ptr[n], weight);
  std::vector<std::uint64_t> fill(m.row_ptr.begin(), m.row_ptr.end() - 1);
  for (const auto& [a, b] : edges) {
    m.col[fill[a]++] = b;
    m.col[fill[b]++] = a;
  }
  for (std::size_t i = 0; i < n; ++i)
    std::sort(m.col.begin() + static_cast<std::ptrdiff_t>(m.row_ptr[i]),
              m.col.begin() + static_cast<std::ptrdiff_t>(m.row_ptr[i + 1]));
  return m;
}

namespace {

using EdgeList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

// G(n, p) over `members` by geometric edge skipping (Batagelj & Brandes).
void erdos_renyi(const std::vector<std::uint32_t>& members, double mean_degree, RngStream& rng,
                 EdgeList& out, std::vector<std::string>& warnings, const std::string& what) {
  const std::size_t g = members.size();
  if (g < 2 || mean_degree <= 0.0) {
    if (g == 1 && mean_degree > 0.0) warnings.push_back(what + ": singleton group, degree clamped to 0");
    return;
  }
  const double max_degree = static_cast<double>(g - 1);
  if (mean_degree >= max_degree) {
    if (mean_degree > max_degree) {
      std::ostringstream os;
      os << what << ": mean degree " << mean_degree << " infeasible for group of " << g
         << ", clamped to " << max_degree;
      warnings.push_back(os.str());
    }
    for (std::size_t v = 1; v < g; ++v)
      for (std::size_t w = 0; w < v; ++w) out.emplace_back(members[v], members[w]);
    return;
  }
  const double lp = std::log1p(-mean_degree / max_degree);
  std::int64_t v = 1;
  std::int64_t w = -1;
  const auto gi = static_cast<std::int64_t>(g);
  while (v < gi) {
    const double skip = std::floor(std::log1p(-rng.uniform()) / lp);
    if (skip > 4e18) break;
    w += 1 + static_cast<std::int64_t>(skip);
    while (w >= v && v < gi) {
      w -= v;
      ++v;
    }
    if (v < gi) out.emplace_back(members[static_cast<std::size_t>(v)], members[static_cast<std::size_t>(w)]);
  }
}

}  // namespace

ContactGraph build_contact_graph(const Population& pop, const GraphConfig& cfg, std::uint64_t seed) {
  const std::size_t n = pop.size();
  if (cfg.workplace_mean_degree < 0 || cfg.mobility_mean_degree < 0)
    throw DomainError("build_contact_graph: negative mean degree");
  if (n > 0 && (cfg.workplace_mean_degree >= static_cast<double>(n) ||
                cfg.mobility_mean_degree >= static_cast<double>(n)))
    throw DomainError("build_contact_graph: mean degree must be < N");
  ContactGraph g;

  EdgeList household;
  for (std::size_t i = 0; i < n;) {
    std::size_t end = i + 1;
    while (end < n && pop.household_id[end] == pop.household_id[i]) ++end;
    for (std::size_t a = i + 1; a < end; ++a)
      for (std::size_t b = i; b < a; ++b)
        household.emplace_back(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
    i = end;
  }
  g.layers[0] = csr_from_edges(n, household, cfg.household_weight);

  auto stratified = [&](Attribute attr, double degree, Layer layer, float weight,
                        const std::vector<std::string>& exempt) {
    const auto& vocab = pop.vocabulary(attr);
    std::vector<std::vector<std::uint32_t>> groups(vocab.size());
    const auto codes = pop.attribute(attr);
    for (std::size_t i = 0; i < n; ++i) groups[codes[i]].push_back(static_cast<std::uint32_t>(i));
    EdgeList edges;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (std::find(exempt.begin(), exempt.end(), vocab.label(c)) != exempt.end()) continue;
      RngStream rng(seed, static_cast<std::uint64_t>(layer), c, Channel::graph);
      erdos_renyi(groups[c], degree, rng, edges, g.warnings,
                  std::string(attribute_name(attr)) + " '" + vocab.label(c) + "'");
    }
    g.layers[static_cast<std::size_t>(layer)] = csr_from_edges(n, edges, weight);
  };
  stratified(Attribute::occupation, cfg.workplace_mean_degree, Layer::workplace,
             cfg.workplace_weight, cfg.workplace_exempt);
  stratified(Attribute::borough, cfg.mobility_mean_degree, Layer::mobility, cfg.mobility_weight, {});
  return g;
}

Csr ContactGraph::combined() const {
  const std::size_t n = agents();
  Csr m;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t d = 0;
    for (const auto& l : layers) d += l.degree(i);
    m.row_ptr[i + 1] = m.row_ptr[i] + d;
  }
  m.col.resize(m.row_ptr[n]);
  m.weight.resize(m.row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t k = m.row_ptr[i];
    for (const auto& l : layers)
      for (std::uint64_t e = l.row_ptr[i]; e < l.row_ptr[i + 1]; ++e, ++k) {
        m.col[k] = l.col[e];
        m.weight[k] = l.weight[e];
      }
  }
  return m;
}

double ContactGraph::mean_degree() const {
  const std::size_t n = agents();
  if (n == 0) return 0.0;
  std::uint64_t nnz = 0;
  for (const auto& l : layers) nnz += l.nnz();
  return static_cast<double>(nnz) / static_cast<double>(n);
}

ContactGraph permute(const ContactGraph& g, std::span<const std::size_t> order) {
  const std::size_t n = g.agents();
  if (order.size() != n) throw UsageError("permute: order has wrong length");
  std::vector<std::uint32_t> inverse(n);
  for (std::size_t i = 0; i < n; ++i) inverse[order[i]] = static_cast<std::uint32_t>(i);
  ContactGraph out;
  out.warnings = g.warnings;
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const Csr& src = g.layers[l];
    Csr& dst = out.layers[l];
    dst.row_ptr.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) dst.row_ptr[i + 1] = dst.row_ptr[i] + src.degree(order[i]);
    dst.col.resize(src.nnz());
    dst.weight.resize(src.nnz());
    std::vector<std::pair<std::uint32_t, float>> row;
    for (std::size_t i = 0; i < n; ++i) {
      row.clear();
      for (std::uint64_t e = src.row_ptr[order[i]]; e < src.row_ptr[order[i] + 1]; ++e)
        row.emplace_back(inverse[src.col[e]], src.weight[e]);
      std::sort(row.begin(), row.end());
      std::uint64_t k = dst.row_ptr[i];
      for (const auto& [c, w] : row) {
        dst.col[k] = c;
        dst.weight[k++] = w;
      }
    }
  }
  return out;
}

}  // namespace abmsim
