#include "abmsim/behavior/archetype.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/core/parallel.hpp"
#include "abmsim/core/rng.hpp"
#include "abmsim/core/stochastic.hpp"

namespace abmsim {

ArchetypeKeySpace::ArchetypeKeySpace(const Population& pop, std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)), size_(1) {
  for (auto a : attributes_) {
    if (std::count(attributes_.begin(), attributes_.end(), a) > 1)
      throw UsageError("archetype attribute '" + std::string(attribute_name(a)) + "' listed twice");
    labels_.push_back(pop.vocabulary(a).labels());
    size_ *= std::max<std::size_t>(1, labels_.back().size());
  }
}

bool ArchetypeKeySpace::uses(Attribute a) const noexcept {
  return std::find(attributes_.begin(), attributes_.end(), a) != attributes_.end();
}

std::uint32_t ArchetypeKeySpace::key_of(const Population& pop, std::size_t agent) const {
  std::size_t k = 0;
  for (std::size_t j = 0; j < attributes_.size(); ++j) {
    const auto code = pop.attribute(attributes_[j])[agent];
    if (code >= labels_[j].size())
      throw UsageError("archetype key: population vocabulary differs from key space");
    k = k * labels_[j].size() + code;
  }
  return static_cast<std::uint32_t>(k);
}

std::vector<std::uint32_t> ArchetypeKeySpace::keys(const Population& pop) const {
  std::vector<std::uint32_t> out(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) out[i] = key_of(pop, i);
  return out;
}

AgentProfile ArchetypeKeySpace::profile(std::size_t key) const {
  if (key >= size_) throw UsageError("archetype key out of range");
  AgentProfile p;
  for (std::size_t j = attributes_.size(); j-- > 0;) {
    const auto card = labels_[j].size();
    p[static_cast<std::size_t>(attributes_[j])] = labels_[j][key % card];
    key /= card;
  }
  return p;
}

std::string ArchetypeKeySpace::describe(std::size_t key) const {
  const auto p = profile(key);
  std::string s;
  for (auto a : attributes_) {
    if (!s.empty()) s += ", ";
    s += std::string(attribute_name(a)) + "=" + *p[static_cast<std::size_t>(a)];
  }
  return "{" + s + "}";
}

void ArchetypeTable::set(std::uint32_t key, const ContextBin& ctx, Action a, Entry e) {
  if (!(e.p >= 0.0 && e.p <= 1.0)) throw DomainError("archetype probability outside [0, 1]");
  if (e.samples < 1) throw DomainError("archetype entry needs M >= 1");
  entries[{key, ctx, a}] = e;
}

const ArchetypeTable::Entry* ArchetypeTable::find(std::uint32_t key, const ContextBin& ctx,
                                                  Action a) const {
  auto it = entries.find({key, ctx, a});
  return it == entries.end() ? nullptr : &it->second;
}

std::vector<double> ArchetypeTable::slice(std::size_t k, const ContextBin& ctx, Action a) const {
  std::vector<double> out(k);
  for (std::size_t key = 0; key < k; ++key) {
    const auto* e = find(static_cast<std::uint32_t>(key), ctx, a);
    if (!e)
      throw UsageError("archetype table: missing entry for key " + std::to_string(key) + ", " +
                       ctx.describe() + ", action " + std::string(action_name(a)));
    out[key] = e->p;
  }
  return out;
}

bool ArchetypeSlice::complete() const noexcept {
  return std::none_of(missing.begin(), missing.end(), [](auto m) { return m != 0; });
}

void ArchetypeSlice::throw_if_missing() const {
  for (std::size_t k = 0; k < missing.size(); ++k)
    if (missing[k])
      throw Error("decision provider failed for archetype " + std::to_string(k) + " (" +
                  ctx.describe() + ", " + std::string(action_name(action)) + "): " + errors[k]);
}

void ArchetypeSlice::merge_into(ArchetypeTable& table) const {
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (!missing[k]) table.set(static_cast<std::uint32_t>(k), ctx, action, {probs[k], samples});
}

namespace {

template <class ProfileOf>
ArchetypeSlice estimate(DecisionProvider& provider, std::size_t k, ProfileOf profile_of,
                        const ContextBin& ctx, Action action, const EstimateOptions& opts) {
  if (opts.samples < 1) throw DomainError("estimate_archetype_probs: M must be >= 1");
  ArchetypeSlice slice;
  slice.ctx = ctx;
  slice.action = action;
  slice.samples = opts.samples;
  slice.probs.assign(k, 0.0);
  slice.missing.assign(k, 0);
  slice.errors.assign(k, {});

  auto run_entry = [&](std::size_t key) {
    const auto prompt = render_prompt(opts.prompt_template, profile_of(key), ctx, action, opts.binning);
    std::size_t yes = 0;
    try {
      for (std::size_t j = 0; j < opts.samples; ++j) {
        const DecisionRequest req{prompt, action, ctx, {opts.seed, opts.step, key, j}};
        if (provider.query(req).answer) ++yes;
      }
      slice.probs[key] = static_cast<double>(yes) / static_cast<double>(opts.samples);
    } catch (const TemplateError&) {
      throw;
    } catch (const std::exception& e) {
      slice.missing[key] = 1;
      slice.errors[key] = e.what();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opts.parallelism, 1, std::max<std::size_t>(k, 1));
  if (workers == 1) {
    for (std::size_t key = 0; key < k; ++key) run_entry(key);
    return slice;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t key = next++; key < k; key = next++) {
          try {
            run_entry(key);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
  return slice;
}

}  // namespace

ArchetypeSlice estimate_archetype_probs(DecisionProvider& provider, const ArchetypeKeySpace& keys,
                                        const ContextBin& ctx, Action action,
                                        const EstimateOptions& opts) {
  return estimate(
      provider, keys.size(), [&](std::size_t k) { return keys.profile(k); }, ctx, action, opts);
}

ArchetypeSlice estimate_profile_probs(DecisionProvider& provider,
                                      std::span<const AgentProfile> profiles, const ContextBin& ctx,
                                      Action action, const EstimateOptions& opts) {
  return estimate(
      provider, profiles.size(), [&](std::size_t k) -> const AgentProfile& { return profiles[k]; },
      ctx, action, opts);
}

std::uint64_t action_stream_step(std::int64_t step, Action action) noexcept {
  return static_cast<std::uint64_t>(step) * kActionCount + static_cast<std::uint64_t>(action);
}

std::vector<std::uint8_t> sample_actions(const ArchetypeTable& table, const ArchetypeKeySpace& keys,
                                         std::span<const std::uint32_t> agent_keys,
                                         std::span<const std::uint64_t> agent_ids,
                                         const ContextBin& ctx, Action action, std::uint64_t seed,
                                         std::int64_t step, std::size_t threads) {
  if (agent_keys.size() != agent_ids.size()) throw UsageError("sample_actions: length mismatch");
  std::vector<std::uint8_t> needed(keys.size(), 0);
  for (auto k : agent_keys) needed.at(k) = 1;
  std::vector<double> p(keys.size(), 0.0);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (!needed[k]) continue;
    const auto* e = table.find(static_cast<std::uint32_t>(k), ctx, action);
    if (!e)
      throw UsageError("archetype table: missing entry for key " + keys.describe(k) + ", " +
                       ctx.describe() + ", action " + std::string(action_name(action)));
    p[k] = e->p;
  }
  std::vector<std::uint8_t> out(agent_keys.size());
  const auto sstep = action_stream_step(step, action);
  parallel_for(agent_keys.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      RngStream rng(seed, sstep, agent_ids[i], Channel::behavior);
      out[i] = rng.uniform() < p[agent_keys[i]] ? 1 : 0;
    }
  });
  return out;
}

ad::TapeValue sample_actions_st(const ad::TapeValue& key_probs,
                                std::shared_ptr<const std::vector<std::uint32_t>> agent_keys,
                                std::span<const std::uint64_t> agent_ids, Action action,
                                std::uint64_t seed, std::int64_t step) {
  if (agent_keys->size() != agent_ids.size()) throw UsageError("sample_actions_st: length mismatch");
  const auto per_agent = ad::gather(key_probs, agent_keys);
  std::vector<double> u(agent_ids.size());
  const auto sstep = action_stream_step(step, action);
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = RngStream(seed, sstep, agent_ids[i], Channel::behavior).uniform();
  return ad::bernoulli_st(per_agent, u);
}

}  // namespace abmsim
