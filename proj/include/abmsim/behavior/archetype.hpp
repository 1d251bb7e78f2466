#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "abmsim/behavior/prompt.hpp"
#include "abmsim/behavior/provider.hpp"
#include "abmsim/core/tape.hpp"
#include "abmsim/popgen/population.hpp"

namespace abmsim {

/// Mixed-radix index over a chosen subset of agent attributes.
class ArchetypeKeySpace {
 public:
  ArchetypeKeySpace() = default;
  ArchetypeKeySpace(const Population& pop, std::vector<Attribute> attributes);

  /// K: product of the attribute cardinalities.
  std::size_t size() const noexcept { return size_; }
  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  bool uses(Attribute a) const noexcept;

  std::uint32_t key_of(const Population& pop, std::size_t agent) const;
  std::vector<std::uint32_t> keys(const Population& pop) const;
  /// Labels bound by `key`; unused attributes stay unset.
  AgentProfile profile(std::size_t key) const;
  std::string describe(std::size_t key) const;

 private:
  std::vector<Attribute> attributes_;
  std::vector<std::vector<std::string>> labels_;
  std::size_t size_ = 0;
};

/// Provider estimates of p(key, context, action).
struct ArchetypeTable {
  struct Entry {
    double p = 0.0;
    std::size_t samples = 0;
  };
  using Key = std::tuple<std::uint32_t, ContextBin, Action>;

  std::map<Key, Entry> entries;

  void set(std::uint32_t key, const ContextBin& ctx, Action a, Entry e);
  const Entry* find(std::uint32_t key, const ContextBin& ctx, Action a) const;
  /// Probabilities for keys [0, K) in one context; throws UsageError naming
  /// the first missing (key, context).
  std::vector<double> slice(std::size_t k, const ContextBin& ctx, Action a) const;
};

struct EstimateOptions {
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::size_t parallelism = 1;
  PromptTemplate prompt_template = PromptTemplate::standard(false, false);
  ContextBinning binning;
};

/// One (context, action) slice of the archetype table.
struct ArchetypeSlice {
  ContextBin ctx;
  Action action = Action::isolate;
  std::vector<double> probs;
  std::vector<std::uint8_t> missing;
  std::vector<std::string> errors;
  std::size_t samples = 0;

  bool complete() const noexcept;
  /// Throws Error describing the first missing entry.
  void throw_if_missing() const;
  void merge_into(ArchetypeTable& table) const;
};

/// p_hat(k) = (#yes) / M over M provider queries for every key k in the
/// space. Entries whose queries keep failing are marked missing.
ArchetypeSlice estimate_archetype_probs(DecisionProvider& provider, const ArchetypeKeySpace& keys,
                                        const ContextBin& ctx, Action action,
                                        const EstimateOptions& opts);

/// Same estimator over an explicit list of profiles (one entry each), as
/// used when every agent is queried individually.
ArchetypeSlice estimate_profile_probs(DecisionProvider& provider,
                                      std::span<const AgentProfile> profiles, const ContextBin& ctx,
                                      Action action, const EstimateOptions& opts);

/// Stream key used for agent action draws.
std::uint64_t action_stream_step(std::int64_t step, Action action) noexcept;

/// Bernoulli(p(key(i), ctx)) per agent. `agent_ids` key each agent's random
/// stream so results do not depend on agent order or thread count.
std::vector<std::uint8_t> sample_actions(const ArchetypeTable& table, const ArchetypeKeySpace& keys,
                                         std::span<const std::uint32_t> agent_keys,
                                         std::span<const std::uint64_t> agent_ids,
                                         const ContextBin& ctx, Action action, std::uint64_t seed,
                                         std::int64_t step, std::size_t threads = 1);

/// Taped variant: per-key probabilities -> per-agent 0/1 with a
/// straight-through gradient back to the probabilities.
ad::TapeValue sample_actions_st(const ad::TapeValue& key_probs,
                                std::shared_ptr<const std::vector<std::uint32_t>> agent_keys,
                                std::span<const std::uint64_t> agent_ids, Action action,
                                std::uint64_t seed, std::int64_t step);

}  // namespace abmsim
