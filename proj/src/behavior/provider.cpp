#include "abmsim/behavior/provider.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "abmsim/core/error.hpp"
#include "abmsim/core/rng.hpp"

namespace abmsim {

Decision DecisionProvider::query(const DecisionRequest& req) {
  try {
    return parse_decision(complete(req));
  } catch (const ParseError&) {
    return parse_decision(complete(req));
  }
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double hashed_uniform(std::uint64_t h) {
  return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

}  // namespace

HeuristicProvider::HeuristicProvider(double p_isolate, double p_work)
    : p_isolate_(p_isolate), p_work_(p_work < 0.0 ? p_isolate : p_work) {
  for (double p : {p_isolate_, p_work_})
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("heuristic provider: p must be in [0, 1]");
}

std::string HeuristicProvider::complete(const DecisionRequest& req) {
  const double p = req.action == Action::isolate ? p_isolate_ : p_work_;
  RngStream rng(req.tag.seed ^ mix64(req.tag.draw), static_cast<std::uint64_t>(req.tag.step),
                req.tag.entry * kActionCount + static_cast<std::uint64_t>(req.action),
                Channel::provider);
  return rng.uniform() < p ? "Yes. Sampled at random." : "No. Sampled at random.";
}

MockTableProvider::MockTableProvider(std::vector<Entry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_)
    if (e.answers.empty())
      throw SchemaError("mock table entry '" + e.prompt_contains + "' has no answers");
}

MockTableProvider MockTableProvider::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("mock table: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("mock table: expected a JSON array");
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& item = j[i];
    if (!item.is_object() || !item.contains("prompt_contains") || !item.contains("answers"))
      throw SchemaError("mock table entry " + std::to_string(i) +
                        ": expected {\"prompt_contains\", \"answers\"}");
    try {
      entries.push_back({item.at("prompt_contains").get<std::string>(),
                         item.at("answers").get<std::vector<std::string>>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("mock table entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return MockTableProvider(std::move(entries));
}

MockTableProvider MockTableProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string MockTableProvider::complete(const DecisionRequest& req) {
  for (const auto& e : entries_)
    if (req.prompt.user.find(e.prompt_contains) != std::string::npos)
      return e.answers[req.tag.draw % e.answers.size()];
  throw Error("mock table: no entry matches the prompt");
}

double FatigueConfig::probability(Action a, const ContextBin& ctx) const {
  const double months = ctx.duration_months;
  const bool paid = ctx.payment > 0.0;
  double p = a == Action::isolate
                 ? isolate_base + isolate_per_month * months + isolate_per_case_bin * ctx.cases_bin +
                       (paid ? isolate_with_payment : 0.0)
                 : work_base + work_per_month * months + (paid ? work_with_payment : 0.0);
  return std::clamp(p, floor, ceiling);
}

std::string FatigueProvider::complete(const DecisionRequest& req) {
  const double p = cfg_.probability(req.action, req.ctx);
  const std::uint64_t h =
      fnv1a(req.prompt.user) ^ mix64(req.tag.draw + 0x9e37) ^ mix64(req.tag.seed + 0x51);
  if (hashed_uniform(h) < p)
    return req.action == Action::isolate ? "Yes. Staying home keeps me safe."
                                         : "Yes. I need the income.";
  return req.action == Action::isolate ? "No. I have been careful long enough."
                                       : "No. Work is not safe right now.";
}

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig cfg;
  if (const char* e = std::getenv("DECISION_ENDPOINT")) cfg.endpoint = e;
  if (const char* k = std::getenv("DECISION_API_KEY")) cfg.api_key = k;
  return cfg;
}

namespace {

struct ParsedEndpoint {
  std::string origin;
  std::string path;
};

ParsedEndpoint split_endpoint(const std::string& url) {
  if (url.empty()) throw UsageError("remote provider: no endpoint (set DECISION_ENDPOINT)");
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
    throw UsageError("remote provider: endpoint must be http://host[:port]/path, got '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string remote_query(const RemoteConfig& cfg, const Prompt& prompt) {
  const auto ep = split_endpoint(cfg.endpoint);
  const std::string body = nlohmann::json{{"system", prompt.system}, {"user", prompt.user}}.dump();
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  auto backoff = cfg.backoff;
  std::string last_error;
  int last_status = 0;
  for (int attempt = 0; attempt <= std::max(0, cfg.retries); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_status = res->status;
      last_error = "server returned status " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw ProtocolError(res->status, "remote provider: status " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(res->status, std::string("remote provider: malformed response: ") + e.what());
    }
  }
  if (last_status != 0)
    throw ProtocolError(last_status, "remote provider: retries exhausted, " + last_error);
  throw TransportError("remote provider: retries exhausted, " + last_error);
}

RemoteProvider::RemoteProvider(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  split_endpoint(cfg_.endpoint);
}

std::string RemoteProvider::complete(const DecisionRequest& req) {
  return remote_query(cfg_, req.prompt);
}

Decision CountingProvider::query(const DecisionRequest& req) {
  ++count_;
  return inner_.query(req);
}

std::unique_ptr<DecisionProvider> make_provider(const std::string& spec) {
  if (spec == "heuristic") return std::make_unique<HeuristicProvider>(0.5);
  if (spec.rfind("heuristic:", 0) == 0) {
    const auto arg = spec.substr(10);
    char* end = nullptr;
    const double p = std::strtod(arg.c_str(), &end);
    if (arg.empty() || *end != '\0') throw UsageError("provider '" + spec + "': bad probability");
    return std::make_unique<HeuristicProvider>(p);
  }
  if (spec.rfind("mock:", 0) == 0)
    return std::make_unique<MockTableProvider>(MockTableProvider::from_file(spec.substr(5)));
  if (spec == "fatigue") return std::make_unique<FatigueProvider>();
  if (spec == "remote") return std::make_unique<RemoteProvider>(RemoteConfig::from_env());
  throw UsageError("unknown provider '" + spec + "' (heuristic[:p], mock:<path>, fatigue, remote)");
}

}  // namespace abmsim
