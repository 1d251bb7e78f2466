#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "abmsim/core/csr.hpp"
#include "abmsim/popgen/ipf.hpp"
#include "abmsim/popgen/population.hpp"

namespace abmsim {

/// Distribution over household sizes; probs[k] is P(size = k + 1).
struct HouseholdSizeDist {
  std::vector<double> probs{1.0};

  static HouseholdSizeDist point_mass(std::size_t size);
};

/// Draw N agents from a fitted joint table and group them into households.
///
/// Agents are ordered by borough, then households are filled sequentially
/// within each borough with sizes drawn from `households`; the last household
/// of a borough may be smaller. Attributes absent from the joint get the
/// single label "na".
Population sample_population(const JointTable& joint, std::size_t n,
                             const HouseholdSizeDist& households, std::uint64_t seed);

/// Illustrative city-scale marginals (five boroughs, age, gender, income,
/// occupation) used when a config names no population source.
std::vector<MarginalTable> default_marginals();
HouseholdSizeDist default_household_sizes();

/// ipf_fit from an all-ones seed, then sample_population.
Population synthesize_population(const std::vector<MarginalTable>& marginals, std::size_t n,
                                 const HouseholdSizeDist& households, std::uint64_t seed);

enum class Layer : std::uint8_t { household = 0, workplace = 1, mobility = 2 };
inline constexpr std::size_t kLayerCount = 3;

struct GraphConfig {
  double workplace_mean_degree = 8.0;
  double mobility_mean_degree = 8.0;
  float household_weight = 1.0f;
  float workplace_weight = 1.0f;
  float mobility_weight = 1.0f;
  /// Occupation labels that take no part in the workplace layer.
  std::vector<std::string> workplace_exempt{"none", "na"};
};

/// Layered, symmetric, self-loop-free contact network.
struct ContactGraph {
  std::array<Csr, kLayerCount> layers;
  std::vector<std::string> warnings;

  const Csr& layer(Layer l) const noexcept { return layers[static_cast<std::size_t>(l)]; }
  std::size_t agents() const noexcept { return layers[0].rows(); }
  /// Union of all layers as one adjacency (parallel edges kept).
  Csr combined() const;
  double mean_degree() const;
};

/// Household cliques, occupation-stratified and borough-stratified
/// Erdos-Renyi layers. Group sizes too small for the requested degree are
/// made complete and reported in `warnings`.
ContactGraph build_contact_graph(const Population& pop, const GraphConfig& cfg, std::uint64_t seed);

/// Build a symmetric CSR from an undirected edge list over n vertices.
Csr csr_from_edges(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                   float weight);

/// Relabel a graph so that new vertex i is old vertex order[i].
ContactGraph permute(const ContactGraph& g, std::span<const std::size_t> order);

}  // namespace abmsim
