#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abmsim {

/// Static categorical attributes carried by every agent.
enum class Attribute : std::uint8_t { age_band, gender, borough, income_band, occupation };

inline constexpr std::size_t kAttributeCount = 5;
inline constexpr std::array<Attribute, kAttributeCount> kAttributes = {
    Attribute::age_band, Attribute::gender, Attribute::borough, Attribute::income_band,
    Attribute::occupation};

std::string_view attribute_name(Attribute a) noexcept;
std::optional<Attribute> parse_attribute(std::string_view name) noexcept;

enum class Stage : std::uint8_t { S = 0, E = 1, I = 2, R = 3, M = 4 };
inline constexpr std::size_t kStageCount = 5;
char stage_letter(Stage s) noexcept;

/// Ordered label set for one attribute; codes index into it.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t code) const { return labels_.at(code); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<std::uint16_t> find(std::string_view label) const noexcept;
  /// Code for `label`, appending it when new.
  std::uint16_t intern(std::string_view label);

 private:
  std::vector<std::string> labels_;
};

using Vocabularies = std::array<Vocabulary, kAttributeCount>;

/// Structure-of-arrays agent table: static demographics plus the dynamic
/// disease, vaccination, labor and isolation state.
struct Population {
  Vocabularies vocab;

  // static
  std::vector<std::uint64_t> agent_id;
  std::array<std::vector<std::uint16_t>, kAttributeCount> codes;
  std::vector<std::uint32_t> household_id;

  // dynamic
  std::vector<Stage> stage;
  std::vector<std::int32_t> stage_timer;
  std::vector<std::uint8_t> doses_received;
  std::vector<std::int32_t> last_dose_step;
  std::vector<std::uint8_t> employed;
  std::vector<double> willingness;
  std::vector<std::uint8_t> isolating;

  std::size_t size() const noexcept { return agent_id.size(); }
  std::span<const std::uint16_t> attribute(Attribute a) const noexcept {
    return codes[static_cast<std::size_t>(a)];
  }
  const Vocabulary& vocabulary(Attribute a) const noexcept {
    return vocab[static_cast<std::size_t>(a)];
  }
  const std::string& label(Attribute a, std::size_t agent) const {
    return vocabulary(a).label(attribute(a)[agent]);
  }

  /// Size every dynamic array to N and set all agents susceptible.
  void reset_dynamic();
  /// Throws SchemaError if array lengths or household contiguity are broken.
  void validate() const;
  std::size_t household_count() const noexcept;
};

/// Numeric value of an income label: a plain number, or the midpoint of an
/// "AtB" range. nullopt when the label is neither.
std::optional<double> income_value(std::string_view label) noexcept;

/// Permute agents; household ids are kept as-is (callers relabel graphs).
Population permute(const Population& pop, std::span<const std::size_t> order);

}  // namespace abmsim
