#include "abmsim/popgen/population.hpp"

#include <charconv>
#include <unordered_set>

#include "abmsim/core/error.hpp"

namespace abmsim {

namespace {
constexpr std::array<std::string_view, kAttributeCount> kNames = {
    "age_band", "gender", "borough", "income_band", "occupation"};

std::optional<double> parse_number(std::string_view s) noexcept {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}
}  // namespace

std::string_view attribute_name(Attribute a) noexcept { return kNames[static_cast<std::size_t>(a)]; }

std::optional<Attribute> parse_attribute(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kAttributeCount; ++i)
    if (kNames[i] == name) return kAttributes[i];
  return std::nullopt;
}

char stage_letter(Stage s) noexcept { return "SEIRM"[static_cast<int>(s)]; }

Vocabulary::Vocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_)
    if (!seen.insert(l).second) throw SchemaError("duplicate label '" + l + "'");
}

std::optional<std::uint16_t> Vocabulary::find(std::string_view label) const noexcept {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return static_cast<std::uint16_t>(i);
  return std::nullopt;
}

std::uint16_t Vocabulary::intern(std::string_view label) {
  if (auto c = find(label)) return *c;
  if (labels_.size() >= 0xFFFF) throw SchemaError("too many labels");
  labels_.emplace_back(label);
  return static_cast<std::uint16_t>(labels_.size() - 1);
}

void Population::reset_dynamic() {
  const std::size_t n = size();
  stage.assign(n, Stage::S);
  stage_timer.assign(n, 0);
  doses_received.assign(n, 0);
  last_dose_step.assign(n, -1);
  employed.assign(n, 1);
  willingness.assign(n, 1.0);
  isolating.assign(n, 0);
}

void Population::validate() const {
  const std::size_t n = size();
  for (std::size_t a = 0; a < kAttributeCount; ++a) {
    if (codes[a].size() != n)
      throw SchemaError(std::string("attribute ") + std::string(kNames[a]) + " has wrong length");
    for (auto c : codes[a])
      if (c >= vocab[a].size())
        throw SchemaError(std::string("attribute ") + std::string(kNames[a]) + " code out of range");
  }
  if (household_id.size() != n) throw SchemaError("household_id has wrong length");
  std::unordered_set<std::uint32_t> closed;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && household_id[i] != household_id[i - 1]) {
      closed.insert(household_id[i - 1]);
      if (closed.count(household_id[i]))
        throw SchemaError("household " + std::to_string(household_id[i]) +
                          " is not contiguous (row " + std::to_string(i) + ")");
    }
  }
  const auto check = [n](std::size_t len, const char* what) {
    if (len != 0 && len != n) throw SchemaError(std::string(what) + " has wrong length");
  };
  check(stage.size(), "stage");
  check(stage_timer.size(), "stage_timer");
  check(doses_received.size(), "doses_received");
  check(last_dose_step.size(), "last_dose_step");
  check(employed.size(), "employed");
  check(willingness.size(), "willingness");
  check(isolating.size(), "isolating");
}

std::size_t Population::household_count() const noexcept {
  std::unordered_set<std::uint32_t> ids(household_id.begin(), household_id.end());
  return ids.size();
}

std::optional<double> income_value(std::string_view label) noexcept {
  if (auto v = parse_number(label)) return v;
  const auto t = label.find('t');
  if (t == std::string_view::npos) return std::nullopt;
  auto lo = parse_number(label.substr(0, t));
  auto hi = parse_number(label.substr(t + 1));
  if (!lo || !hi) return std::nullopt;
  return 0.5 * (*lo + *hi);
}

Population permute(const Population& pop, std::span<const std::size_t> order) {
  const std::size_t n = pop.size();
  if (order.size() != n) throw UsageError("permute: order has wrong length");
  Population out;
  out.vocab = pop.vocab;
  auto take = [&](const auto& src, auto& dst) {
    if (src.empty()) return;
    dst.resize(n);
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[order[i]];
  };
  take(pop.agent_id, out.agent_id);
  for (std::size_t a = 0; a < kAttributeCount; ++a) take(pop.codes[a], out.codes[a]);
  take(pop.household_id, out.household_id);
  take(pop.stage, out.stage);
  take(pop.stage_timer, out.stage_timer);
  take(pop.doses_received, out.doses_received);
  take(pop.last_dose_step, out.last_dose_step);
  take(pop.employed, out.employed);
  take(pop.willingness, out.willingness);
  take(pop.isolating, out.isolating);
  return out;
}

}  // namespace abmsim
