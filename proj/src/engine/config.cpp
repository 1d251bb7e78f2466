#include "abmsim/engine/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "abmsim/core/error.hpp"

namespace abmsim {

using nlohmann::json;
using Issues = std::vector<ConfigError::Issue>;

std::string_view behavior_mode_name(BehaviorMode m) noexcept {
  switch (m) {
    case BehaviorMode::heuristic: return "heuristic";
    case BehaviorMode::archetype: return "archetype";
    case BehaviorMode::per_agent: return "per_agent";
  }
  return "?";
}

std::string_view execution_mode_name(ExecutionMode m) noexcept {
  return m == ExecutionMode::stochastic ? "stochastic" : "mean_field";
}

bool SimulationConfig::snapshot_at(int step) const {
  if (execution.snapshot_every > 0 && step % execution.snapshot_every == 0) return true;
  for (int s : execution.snapshot_steps)
    if (s == step) return true;
  return false;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

// Reads one JSON object, recording type/range violations and unknown keys.
class Reader {
 public:
  Reader(const json* j, std::string pointer, Issues& issues)
      : j_(j), pointer_(std::move(pointer)), issues_(issues) {
    if (j_ && !j_->is_object()) {
      fail("", "expected an object");
      j_ = nullptr;
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  ~Reader() {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!seen_.count(k)) issues_.push_back({path(k), "unknown key"});
  }

  std::string path(const std::string& key) const {
    return key.empty() ? (pointer_.empty() ? "/" : pointer_) : pointer_ + "/" + escape_pointer(key);
  }
  void fail(const std::string& key, const std::string& msg) { issues_.push_back({path(key), msg}); }

  const json* find(const char* key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return nullptr;
    return &*it;
  }
  bool has(const char* key) const { return j_ && j_->contains(key) && !j_->at(key).is_null(); }

  Reader child(const char* key) {
    const json* v = find(key);
    return Reader(v, path(key), issues_);
  }

  void number(const char* key, double& out, double lo = -kInf, double hi = kInf) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) return fail(key, "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) return fail(key, "must be finite");
    if (x < lo || x > hi) return fail(key, range_message(lo, hi));
    out = x;
  }

  template <class Int>
  void integer(const char* key, Int& out, double lo = -kInf, double hi = kInf) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer()) return fail(key, "expected an integer");
    const auto x = v->get<std::int64_t>();
    if (static_cast<double>(x) < lo || static_cast<double>(x) > hi) return fail(key, range_message(lo, hi));
    out = static_cast<Int>(x);
  }

  void boolean(const char* key, bool& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) return fail(key, "expected true or false");
    out = v->get<bool>();
  }

  void string(const char* key, std::string& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) return fail(key, "expected a string");
    out = v->get<std::string>();
  }

  void strings(const char* key, std::vector<std::string>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) return fail(key, "expected an array of strings");
    std::vector<std::string> tmp;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) return fail(key, "element " + std::to_string(i) + " is not a string");
      tmp.push_back((*v)[i].get<std::string>());
    }
    out = std::move(tmp);
  }

  void integers(const char* key, std::vector<int>& out, double lo = -kInf) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) return fail(key, "expected an array of integers");
    std::vector<int> tmp;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_integer() || (*v)[i].get<double>() < lo)
        return fail(key, "element " + std::to_string(i) + " must be an integer >= " + fmt(lo));
      tmp.push_back((*v)[i].get<int>());
    }
    out = std::move(tmp);
  }

  // number or non-empty array of numbers
  void series(const char* key, std::vector<double>& out, double lo = -kInf, double hi = kInf,
              bool allow_empty = false) {
    const json* v = find(key);
    if (!v) return;
    std::vector<double> tmp;
    if (v->is_number()) {
      tmp.push_back(v->get<double>());
    } else if (v->is_array() && (allow_empty || !v->empty())) {
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) return fail(key, "element " + std::to_string(i) + " is not a number");
        tmp.push_back((*v)[i].get<double>());
      }
    } else {
      return fail(key, "expected a number or a non-empty array of numbers");
    }
    for (double x : tmp)
      if (!std::isfinite(x) || x < lo || x > hi) return fail(key, range_message(lo, hi));
    out = std::move(tmp);
  }

  void number_map(const char* key, std::map<std::string, double>& out, double lo, double hi) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_object()) return fail(key, "expected an object of numbers");
    std::map<std::string, double> tmp;
    for (const auto& [k, x] : v->items()) {
      if (!x.is_number() || x.get<double>() < lo || x.get<double>() > hi) {
        issues_.push_back({path(key) + "/" + escape_pointer(k), range_message(lo, hi)});
        return;
      }
      tmp[k] = x.get<double>();
    }
    out = std::move(tmp);
  }

  const json* raw(const char* key) { return find(key); }

 private:
  static std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
  }
  static std::string range_message(double lo, double hi) {
    if (lo == -kInf && hi == kInf) return "must be finite";
    if (hi == kInf) return "must be >= " + fmt(lo);
    if (lo == -kInf) return "must be <= " + fmt(hi);
    return "must be in [" + fmt(lo) + ", " + fmt(hi) + "]";
  }

  const json* j_;
  std::string pointer_;
  Issues& issues_;
  std::set<std::string> seen_;
};

void read_population(Reader r, PopulationSource& p) {
  r.string("path", p.path);
  r.integer("size", p.size, 1, 1e9);
  double full = 0.0;
  if (r.has("full_size")) {
    r.number("full_size", full, 1.0);
    if (full >= 1.0) p.full_size = full;
  } else {
    r.find("full_size");
  }
  r.string("marginals", p.marginals);
  r.series("household_size_probs", p.household_size_probs, 0.0, kInf, true);
}

void read_graph(Reader r, GraphConfig& g) {
  r.number("workplace_mean_degree", g.workplace_mean_degree, 0.0);
  r.number("mobility_mean_degree", g.mobility_mean_degree, 0.0);
  double w = g.household_weight;
  r.number("household_weight", w, 0.0);
  g.household_weight = static_cast<float>(w);
  w = g.workplace_weight;
  r.number("workplace_weight", w, 0.0);
  g.workplace_weight = static_cast<float>(w);
  w = g.mobility_weight;
  r.number("mobility_weight", w, 0.0);
  g.mobility_weight = static_cast<float>(w);
  r.strings("workplace_exempt", g.workplace_exempt);
}

void read_epi(Reader r, EpiConfig& e, Issues& issues, const std::string& pointer) {
  const bool has_r0 = r.has("R0");
  const bool has_beta = r.has("beta");
  if (has_r0 && has_beta) issues.push_back({pointer, "set either R0 or beta, not both"});
  if (has_beta) {
    e.r0.clear();
    r.series("beta", e.beta, 0.0);
  } else {
    r.find("beta");
  }
  if (has_r0) {
    e.beta.clear();
    r.series("R0", e.r0, 0.0);
  } else {
    r.find("R0");
  }
  if (r.has("susceptibility")) {
    const json* v = r.raw("susceptibility");
    if (v->is_object())
      r.number_map("susceptibility", e.susceptibility_by_age, 0.0, kInf);
    else
      r.number("susceptibility", e.susceptibility, 0.0);
  } else {
    r.find("susceptibility");
  }
  if (r.has("mortality")) {
    const json* v = r.raw("mortality");
    if (v->is_object())
      r.number_map("mortality", e.mortality_by_age, 0.0, 1.0);
    else
      r.number("mortality", e.mortality, 0.0, 1.0);
  } else {
    r.find("mortality");
  }
  r.integer("latent_period", e.latent_period, 0, 1e6);
  r.integer("infectious_period", e.infectious_period, 1, 1e6);
  r.number("dt", e.dt, 1e-12);
  r.number("initial_infected_fraction", e.initial_infected_fraction, 0.0, 1.0);
}

void read_labor(Reader r, LaborParams& l) {
  r.number("gamma0", l.gamma0, kGamma0Lo, kGamma0Hi);
  r.number("gamma1", l.gamma1, kGamma1Lo, kGamma1Hi);
  r.series("iur", l.iur, 0.0, 1.0);
}

void read_vaccine(Reader r, VaccineProtocol& v) {
  r.boolean("enabled", v.enabled);
  r.integer("dose_gap", v.dose_gap, 1, 1e6);
  r.number("first_dose_efficacy", v.first_dose_efficacy, 0.0, 1.0);
  r.number("second_dose_efficacy", v.second_dose_efficacy, 0.0, 1.0);
  r.integer("daily_supply", v.daily_supply, 0, 1e12);
  r.number("second_dose_dropout", v.second_dose_dropout, 0.0, 1.0);
  r.integer("start_step", v.start_step, 0, 1e9);
}

void read_testing(Reader r, TestProtocol& t) {
  r.boolean("enabled", t.enabled);
  std::string kind = t.kind == TestKind::antigen ? "antigen" : "pcr";
  r.string("kind", kind);
  if (kind == "antigen")
    t.kind = TestKind::antigen;
  else if (kind == "pcr")
    t.kind = TestKind::pcr;
  else
    r.fail("kind", "expected \"antigen\" or \"pcr\"");
  r.number("sensitivity", t.sensitivity, 0.0, 1.0);
  r.number("specificity", t.specificity, 0.0, 1.0);
  r.integer("result_delay", t.result_delay, 0, 1e6);
  r.number("screening_rate", t.screening_rate, 0.0, 1.0);
}

void read_stimulus(Reader r, StimulusSchedule& s, Issues& issues) {
  r.strings("child_age_bands", s.child_age_bands);
  const json* ev = r.raw("events");
  if (!ev) return;
  const std::string base = r.path("events");
  if (!ev->is_array()) {
    issues.push_back({base, "expected an array of events"});
    return;
  }
  s.events.clear();
  for (std::size_t i = 0; i < ev->size(); ++i) {
    StimulusEvent e;
    {
      Reader er(&(*ev)[i], base + "/" + std::to_string(i), issues);
      er.integer("step", e.step, 0, 1e9);
      er.number("adult_amount", e.adult_amount, 0.0);
      er.number("per_child_amount", e.per_child_amount, 0.0);
      er.strings("eligible_income_bands", e.eligible_income_bands);
    }
    s.events.push_back(std::move(e));
  }
}

void read_context(Reader r, ContextConfig& c) {
  r.number("initial_cases", c.initial_cases, 0.0);
  r.number("initial_change_pct", c.initial_change_pct);
  r.integer("initial_duration_months", c.initial_duration_months, 0, 1e6);
  r.number("duration_offset_weeks", c.duration_offset_weeks);
  r.integer("window_days", c.window_days, 1, 1e6);
}

void read_behavior(Reader r, BehaviorConfig& b) {
  std::string mode(behavior_mode_name(b.mode));
  r.string("mode", mode);
  if (mode == "heuristic")
    b.mode = BehaviorMode::heuristic;
  else if (mode == "archetype")
    b.mode = BehaviorMode::archetype;
  else if (mode == "per_agent")
    b.mode = BehaviorMode::per_agent;
  else
    r.fail("mode", "expected \"heuristic\", \"archetype\" or \"per_agent\"");
  r.number("isolate_probability", b.isolate_probability, 0.0, 1.0);
  r.number("work_probability", b.work_probability, 0.0, 1.0);
  r.string("provider", b.provider);
  std::vector<std::string> attrs;
  for (auto a : b.attributes) attrs.emplace_back(attribute_name(a));
  r.strings("attributes", attrs);
  std::vector<Attribute> parsed;
  for (const auto& name : attrs) {
    auto a = parse_attribute(name);
    if (!a) {
      r.fail("attributes", "unknown attribute '" + name + "'");
      parsed.clear();
      break;
    }
    if (std::find(parsed.begin(), parsed.end(), *a) != parsed.end()) {
      r.fail("attributes", "attribute '" + name + "' listed twice");
      break;
    }
    parsed.push_back(*a);
  }
  if (!parsed.empty() || attrs.empty()) b.attributes = parsed;
  r.integer("samples", b.samples, 1, 1e9);
  r.integer("parallelism", b.parallelism, 1, 4096);
  r.integer("per_agent_cap", b.per_agent_cap, 1, 1e9);
  r.boolean("cache", b.cache);
  read_context(r.child("context"), b.context);
}

void read_execution(Reader r, ExecutionConfig& x) {
  std::string mode(execution_mode_name(x.mode));
  r.string("mode", mode);
  if (mode == "stochastic")
    x.mode = ExecutionMode::stochastic;
  else if (mode == "mean_field")
    x.mode = ExecutionMode::mean_field;
  else
    r.fail("mode", "expected \"stochastic\" or \"mean_field\"");
  r.integer("threads", x.threads, 0, 4096);
  r.integers("snapshot_steps", x.snapshot_steps, 0);
  r.integer("snapshot_every", x.snapshot_every, 0, 1e9);
}

}  // namespace

SimulationConfig parse_config(const json& j) {
  Issues issues;
  SimulationConfig cfg;
  cfg.epi.r0 = {2.5};
  {
    Reader r(&j, "", issues);
    r.integer("horizon_steps", cfg.horizon_steps, 0, 1e7);
    r.integer("seed", cfg.seed, 0, 1.8e19);
    read_population(r.child("population"), cfg.population);
    read_graph(r.child("graph"), cfg.graph);
    read_epi(r.child("epi"), cfg.epi, issues, "/epi");
    read_labor(r.child("labor"), cfg.labor);
    read_vaccine(r.child("vaccine"), cfg.vaccine);
    read_testing(r.child("testing"), cfg.testing);
    read_stimulus(r.child("stimulus"), cfg.stimulus, issues);
    read_behavior(r.child("behavior"), cfg.behavior);
    read_execution(r.child("execution"), cfg.execution);
  }
  for (std::size_t i = 0; i < cfg.stimulus.events.size(); ++i)
    if (cfg.stimulus.events[i].step >= cfg.horizon_steps && cfg.horizon_steps > 0)
      issues.push_back({"/stimulus/events/" + std::to_string(i) + "/step", "outside the horizon"});
  if (cfg.behavior.mode == BehaviorMode::per_agent && cfg.population.path.empty() &&
      cfg.population.size > cfg.behavior.per_agent_cap)
    issues.push_back({"/population/size", "per_agent behavior allows at most " +
                                              std::to_string(cfg.behavior.per_agent_cap) + " agents"});
  if (cfg.behavior.mode == BehaviorMode::archetype && cfg.behavior.attributes.empty())
    issues.push_back({"/behavior/attributes", "archetype mode needs at least one attribute"});
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

SimulationConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

SimulationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

json series_json(const std::vector<double>& v) {
  if (v.size() == 1) return v.front();
  return v;
}

}  // namespace

json to_json(const SimulationConfig& c) {
  json pop{{"path", c.population.path},
           {"size", c.population.size},
           {"full_size", c.population.full_size ? json(*c.population.full_size) : json(nullptr)},
           {"marginals", c.population.marginals},
           {"household_size_probs", c.population.household_size_probs}};
  json graph{{"workplace_mean_degree", c.graph.workplace_mean_degree},
             {"mobility_mean_degree", c.graph.mobility_mean_degree},
             {"household_weight", c.graph.household_weight},
             {"workplace_weight", c.graph.workplace_weight},
             {"mobility_weight", c.graph.mobility_weight},
             {"workplace_exempt", c.graph.workplace_exempt}};
  json epi{{"latent_period", c.epi.latent_period},
           {"infectious_period", c.epi.infectious_period},
           {"dt", c.epi.dt},
           {"initial_infected_fraction", c.epi.initial_infected_fraction}};
  if (!c.epi.r0.empty())
    epi["R0"] = series_json(c.epi.r0);
  else
    epi["beta"] = series_json(c.epi.beta);
  epi["susceptibility"] =
      c.epi.susceptibility_by_age.empty() ? json(c.epi.susceptibility) : json(c.epi.susceptibility_by_age);
  epi["mortality"] = c.epi.mortality_by_age.empty() ? json(c.epi.mortality) : json(c.epi.mortality_by_age);
  json labor{{"gamma0", c.labor.gamma0}, {"gamma1", c.labor.gamma1}, {"iur", series_json(c.labor.iur)}};
  json vaccine{{"enabled", c.vaccine.enabled},
               {"dose_gap", c.vaccine.dose_gap},
               {"first_dose_efficacy", c.vaccine.first_dose_efficacy},
               {"second_dose_efficacy", c.vaccine.second_dose_efficacy},
               {"daily_supply", c.vaccine.daily_supply},
               {"second_dose_dropout", c.vaccine.second_dose_dropout},
               {"start_step", c.vaccine.start_step}};
  json testing{{"enabled", c.testing.enabled},
               {"kind", c.testing.kind == TestKind::antigen ? "antigen" : "pcr"},
               {"sensitivity", c.testing.sensitivity},
               {"specificity", c.testing.specificity},
               {"result_delay", c.testing.result_delay},
               {"screening_rate", c.testing.screening_rate}};
  json events = json::array();
  for (const auto& e : c.stimulus.events)
    events.push_back({{"step", e.step},
                      {"adult_amount", e.adult_amount},
                      {"per_child_amount", e.per_child_amount},
                      {"eligible_income_bands", e.eligible_income_bands}});
  json stimulus{{"events", events}, {"child_age_bands", c.stimulus.child_age_bands}};
  std::vector<std::string> attrs;
  for (auto a : c.behavior.attributes) attrs.emplace_back(attribute_name(a));
  const auto& ctx = c.behavior.context;
  json behavior{{"mode", behavior_mode_name(c.behavior.mode)},
                {"isolate_probability", c.behavior.isolate_probability},
                {"work_probability", c.behavior.work_probability},
                {"provider", c.behavior.provider},
                {"attributes", attrs},
                {"samples", c.behavior.samples},
                {"parallelism", c.behavior.parallelism},
                {"per_agent_cap", c.behavior.per_agent_cap},
                {"cache", c.behavior.cache},
                {"context",
                 {{"initial_cases", ctx.initial_cases},
                  {"initial_change_pct", ctx.initial_change_pct},
                  {"initial_duration_months", ctx.initial_duration_months},
                  {"duration_offset_weeks", ctx.duration_offset_weeks},
                  {"window_days", ctx.window_days}}}};
  json execution{{"mode", execution_mode_name(c.execution.mode)},
                 {"threads", c.execution.threads},
                 {"snapshot_steps", c.execution.snapshot_steps},
                 {"snapshot_every", c.execution.snapshot_every}};
  return json{{"horizon_steps", c.horizon_steps}, {"seed", c.seed},   {"population", pop},
              {"graph", graph},                   {"epi", epi},       {"labor", labor},
              {"vaccine", vaccine},               {"testing", testing}, {"stimulus", stimulus},
              {"behavior", behavior},             {"execution", execution}};
}

std::string config_hash(const SimulationConfig& cfg) {
  auto j = to_json(cfg);
  j["execution"].erase("threads");
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EpiParams resolve_epi(const SimulationConfig& cfg, const Population& pop) {
  EpiParams p;
  const auto& e = cfg.epi;
  p.latent_period = e.latent_period;
  p.infectious_period = e.infectious_period;
  p.dt = e.dt;
  p.initial_infected_fraction = e.initial_infected_fraction;
  if (!e.r0.empty()) {
    p.beta.clear();
    for (double r : e.r0) p.beta.push_back(beta_from_r0(r, e.infectious_period, e.dt));
  } else {
    p.beta = e.beta;
  }
  const auto& ages = pop.vocabulary(Attribute::age_band);
  auto resolve = [&](double fallback, const std::map<std::string, double>& by_age, const char* what) {
    std::vector<double> out(ages.size(), fallback);
    for (const auto& [label, value] : by_age) {
      auto code = ages.find(label);
      if (!code)
        throw ConfigError(std::string("/epi/") + what + "/" + label,
                            "age band not present in the population");
      out[*code] = value;
    }
    return out;
  };
  p.susceptibility = resolve(e.susceptibility, e.susceptibility_by_age, "susceptibility");
  p.mortality = resolve(e.mortality, e.mortality_by_age, "mortality");
  p.validate();
  return p;
}

ScenarioPatch ScenarioPatch::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("/", "patch must be an object of dotted paths");
  ScenarioPatch p;
  for (const auto& [k, v] : j.items()) p.overrides.emplace_back(k, v);
  return p;
}

ScenarioPatch& ScenarioPatch::set(std::string path, json value) {
  overrides.emplace_back(std::move(path), std::move(value));
  return *this;
}

SimulationConfig apply_patch(const SimulationConfig& cfg, const ScenarioPatch& patch) {
  if (patch.empty()) return cfg;
  json j = to_json(cfg);
  Issues issues;
  for (const auto& [path, value] : patch.overrides) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream ss(path);
    while (std::getline(ss, part, '.')) parts.push_back(part);
    std::string pointer;
    for (const auto& p : parts) pointer += "/" + escape_pointer(p);
    if (parts.empty()) {
      issues.push_back({"/", "empty patch path"});
      continue;
    }
    if (parts.size() == 2 && parts[0] == "epi" && (parts[1] == "R0" || parts[1] == "beta")) {
      j["epi"].erase("R0");
      j["epi"].erase("beta");
      j["epi"][parts[1]] = value;
      continue;
    }
    json* node = &j;
    bool ok = true;
    for (const auto& p : parts) {
      if (!node->is_object() || !node->contains(p)) {
        ok = false;
        break;
      }
      node = &(*node)[p];
    }
    if (!ok) {
      issues.push_back({pointer, "unknown config path '" + path + "'"});
      continue;
    }
    *node = value;
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return parse_config(j);
}

}  // namespace abmsim
