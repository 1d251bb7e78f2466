#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "abmsim/popgen/ipf.hpp"
#include "abmsim/popgen/population.hpp"

namespace abmsim {

/// Header of the population interchange CSV.
inline constexpr const char* kPopulationCsvHeader =
    "agent_id,age_band,gender,borough,income_band,occupation,household_id";

void write_population_csv(const Population& pop, std::ostream& out);
void write_population_csv(const Population& pop, const std::filesystem::path& path);

/// Parse the population CSV. Label vocabularies are seeded from `vocab` when
/// given (unknown labels are appended), otherwise built in order of first
/// appearance. Throws SchemaError naming the first offending column or row.
Population read_population_csv(std::istream& in, const Vocabularies* vocab = nullptr);
Population read_population_csv(const std::filesystem::path& path,
                               const Vocabularies* vocab = nullptr);

/// True when both populations carry the same agents with the same labels.
bool same_agents(const Population& a, const Population& b);

/// Marginals JSON: one object {"axis", "bins", "counts"} or an array of them.
std::vector<MarginalTable> read_marginals_json(const std::filesystem::path& path);
std::vector<MarginalTable> parse_marginals_json(const std::string& text);

}  // namespace abmsim
