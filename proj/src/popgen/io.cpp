#include "abmsim/popgen/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abmsim/core/error.hpp"

namespace abmsim {

namespace {

constexpr std::array<Attribute, kAttributeCount> kCsvOrder = {
    Attribute::age_band, Attribute::gender, Attribute::borough, Attribute::income_band,
    Attribute::occupation};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_uint(std::string_view s, std::size_t row, const char* column) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw SchemaError("row " + std::to_string(row) + ", column " + column + ": expected integer, got '" +
                      std::string(s) + "'");
  return v;
}

}  // namespace

void write_population_csv(const Population& pop, std::ostream& out) {
  pop.validate();
  out << kPopulationCsvHeader << '\n';
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out << pop.agent_id[i];
    for (auto a : kCsvOrder) out << ',' << pop.label(a, i);
    out << ',' << pop.household_id[i] << '\n';
  }
}

void write_population_csv(const Population& pop, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_population_csv(pop, out);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Population read_population_csv(std::istream& in, const Vocabularies* vocab) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("population CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  const auto expected = split(kPopulationCsvHeader);
  for (std::size_t k = 0; k < expected.size(); ++k) {
    if (k >= header.size())
      throw SchemaError("population CSV header: missing column '" + std::string(expected[k]) + "'");
    if (header[k] != expected[k])
      throw SchemaError("population CSV header: column " + std::to_string(k + 1) + " is '" +
                        std::string(header[k]) + "', expected '" + std::string(expected[k]) + "'");
  }
  if (header.size() > expected.size())
    throw SchemaError("population CSV header: unexpected column '" +
                      std::string(header[expected.size()]) + "'");

  Population pop;
  if (vocab) pop.vocab = *vocab;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != expected.size())
      throw SchemaError("row " + std::to_string(row) + ": expected " + std::to_string(expected.size()) +
                        " fields, got " + std::to_string(f.size()));
    pop.agent_id.push_back(parse_uint<std::uint64_t>(f[0], row, "agent_id"));
    for (std::size_t k = 0; k < kCsvOrder.size(); ++k) {
      if (f[k + 1].empty())
        throw SchemaError("row " + std::to_string(row) + ", column " + std::string(expected[k + 1]) +
                          ": empty label");
      const auto a = static_cast<std::size_t>(kCsvOrder[k]);
      pop.codes[a].push_back(pop.vocab[a].intern(f[k + 1]));
    }
    pop.household_id.push_back(parse_uint<std::uint32_t>(f[6], row, "household_id"));
  }
  for (std::size_t a = 0; a < kAttributeCount; ++a)
    if (pop.vocab[a].size() == 0) pop.vocab[a].intern("na");
  pop.validate();
  pop.reset_dynamic();
  return pop;
}

Population read_population_csv(const std::filesystem::path& path, const Vocabularies* vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_population_csv(in, vocab);
}

bool same_agents(const Population& a, const Population& b) {
  if (a.size() != b.size() || a.agent_id != b.agent_id || a.household_id != b.household_id)
    return false;
  for (auto attr : kAttributes)
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.label(attr, i) != b.label(attr, i)) return false;
  return true;
}

namespace {

MarginalTable marginal_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("marginal must be an object");
  for (const char* key : {"axis", "bins", "counts"})
    if (!j.contains(key)) throw SchemaError(std::string("marginal: missing key '") + key + "'");
  MarginalTable m;
  try {
    m.axis = j.at("axis").get<std::string>();
    m.bins = j.at("bins").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("marginal: ") + e.what());
  }
  if (!parse_attribute(m.axis)) throw SchemaError("marginal: unknown axis '" + m.axis + "'");
  m.validate();
  return m;
}

}  // namespace

std::vector<MarginalTable> parse_marginals_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("marginals JSON: ") + e.what());
  }
  std::vector<MarginalTable> out;
  if (j.is_array())
    for (const auto& item : j) out.push_back(marginal_from_json(item));
  else
    out.push_back(marginal_from_json(j));
  return out;
}

std::vector<MarginalTable> read_marginals_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_marginals_json(ss.str());
}

}  // namespace abmsim
