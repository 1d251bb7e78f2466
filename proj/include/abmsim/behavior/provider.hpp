#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "abmsim/behavior/prompt.hpp"

namespace abmsim {

/// Identifies one draw: (run seed, step, table entry, sample index).
struct QueryTag {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::uint64_t entry = 0;
  std::uint64_t draw = 0;
};

struct DecisionRequest {
  const Prompt& prompt;
  Action action;
  const ContextBin& ctx;
  QueryTag tag;
};

/// Source of yes/no decisions. Implementations must be safe to call from
/// several threads at once.
class DecisionProvider {
 public:
  virtual ~DecisionProvider() = default;
  virtual std::string kind() const = 0;

  /// Raw response text for one draw.
  virtual std::string complete(const DecisionRequest& req) = 0;

  /// complete() + parse_decision(), re-asking once on a parse failure.
  virtual Decision query(const DecisionRequest& req);
};

/// Answers yes with a fixed probability per action, independent of the prompt.
class HeuristicProvider final : public DecisionProvider {
 public:
  explicit HeuristicProvider(double p_isolate, double p_work = -1.0);
  std::string kind() const override { return "heuristic"; }
  std::string complete(const DecisionRequest& req) override;

 private:
  double p_isolate_;
  double p_work_;
};

/// Scripted answers: the first entry whose `prompt_contains` occurs in the
/// user prompt supplies answers[draw % answers.size()].
class MockTableProvider final : public DecisionProvider {
 public:
  struct Entry {
    std::string prompt_contains;
    std::vector<std::string> answers;
  };

  explicit MockTableProvider(std::vector<Entry> entries);
  static MockTableProvider from_json(const std::string& text);
  static MockTableProvider from_file(const std::filesystem::path& path);

  std::string kind() const override { return "mock_table"; }
  std::string complete(const DecisionRequest& req) override;

 private:
  std::vector<Entry> entries_;
};

/// Deterministic stand-in with structured responses: willingness to isolate
/// rises with case counts and stimulus and decays with pandemic duration.
struct FatigueConfig {
  double isolate_base = 0.7;
  double isolate_per_month = -0.03;
  double isolate_per_case_bin = 0.02;
  double isolate_with_payment = 0.05;
  double work_base = 0.75;
  double work_per_month = 0.01;
  double work_with_payment = -0.05;
  double floor = 0.02;
  double ceiling = 0.98;

  double probability(Action a, const ContextBin& ctx) const;
};

class FatigueProvider final : public DecisionProvider {
 public:
  explicit FatigueProvider(FatigueConfig cfg = {}) : cfg_(cfg) {}
  std::string kind() const override { return "fatigue"; }
  std::string complete(const DecisionRequest& req) override;
  const FatigueConfig& config() const noexcept { return cfg_; }

 private:
  FatigueConfig cfg_;
};

struct RemoteConfig {
  /// http://host[:port]/path
  std::string endpoint;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  int retries = 3;
  std::chrono::milliseconds backoff{200};

  /// Endpoint from DECISION_ENDPOINT, bearer token from DECISION_API_KEY.
  static RemoteConfig from_env();
};

/// POST {"system", "user"} and return the "text" field of the response.
/// Transport failures and 5xx responses are retried with exponential
/// backoff. Throws TransportError / ProtocolError when retries run out and
/// ProtocolError immediately on other non-2xx statuses.
std::string remote_query(const RemoteConfig& cfg, const Prompt& prompt);

class RemoteProvider final : public DecisionProvider {
 public:
  explicit RemoteProvider(RemoteConfig cfg);
  std::string kind() const override { return "remote"; }
  std::string complete(const DecisionRequest& req) override;

 private:
  RemoteConfig cfg_;
};

/// Counts query() calls on the wrapped provider.
class CountingProvider final : public DecisionProvider {
 public:
  explicit CountingProvider(DecisionProvider& inner) : inner_(inner) {}
  std::string kind() const override { return inner_.kind(); }
  std::string complete(const DecisionRequest& req) override { return inner_.complete(req); }
  Decision query(const DecisionRequest& req) override;

  std::uint64_t count() const noexcept { return count_.load(); }
  void reset() noexcept { count_ = 0; }

 private:
  DecisionProvider& inner_;
  std::atomic<std::uint64_t> count_{0};
};

/// Build a provider from a CLI-style spec: "heuristic[:p]",
/// "mock:<path>", "fatigue" or "remote".
std::unique_ptr<DecisionProvider> make_provider(const std::string& spec);

}  // namespace abmsim
