#include "abmsim/analysis/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <thread>

#include "abmsim/core/error.hpp"
#include "abmsim/core/parallel.hpp"
#include "abmsim/labor/labor.hpp"

namespace abmsim::analysis {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<PollMetric, std::string_view>, 5> kMetrics{{
    {PollMetric::median_income, "median_income"},
    {PollMetric::isolation_rate, "isolation_rate"},
    {PollMetric::infection_rate, "infection_rate"},
    {PollMetric::unemployment_rate, "unemployment_rate"},
    {PollMetric::mean_willingness, "mean_willingness"},
}};

Attribute attribute_or_throw(const std::string& name) {
  auto a = parse_attribute(name);
  if (!a) throw UsageError("poll: unknown attribute '" + name + "'");
  return *a;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17);
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string_view metric_name(PollMetric m) noexcept {
  for (const auto& [k, name] : kMetrics)
    if (k == m) return name;
  return "?";
}

std::optional<PollMetric> parse_metric(std::string_view name) noexcept {
  for (const auto& [k, n] : kMetrics)
    if (n == name) return k;
  return std::nullopt;
}

PollQuery PollQuery::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("poll: query must be a JSON object");
  PollQuery q;
  for (const auto& [key, _] : j.items())
    if (key != "group_by" && key != "metric" && key != "filter" && key != "window")
      throw UsageError("poll: unknown query key '" + key + "'");
  try {
    if (j.contains("group_by")) {
      const auto& g = j.at("group_by");
      if (g.is_string()) {
        q.group_by.push_back(attribute_or_throw(g.get<std::string>()));
      } else {
        for (const auto& name : g) q.group_by.push_back(attribute_or_throw(name.get<std::string>()));
      }
    }
    const auto metric = j.at("metric").get<std::string>();
    const auto m = parse_metric(metric);
    if (!m) throw UsageError("poll: unknown metric '" + metric + "'");
    q.metric = *m;
    if (j.contains("filter"))
      for (const auto& [name, labels] : j.at("filter").items())
        q.filter[attribute_or_throw(name)] = labels.is_array() ? labels.get<std::vector<std::string>>()
                                                               : std::vector<std::string>{labels.get<std::string>()};
    if (j.contains("window")) {
      q.from_step = j.at("window").at(0).get<int>();
      q.to_step = j.at("window").at(1).get<int>();
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("poll: malformed query: ") + e.what());
  }
  return q;
}

PollTable poll(const Population& pop, const Trajectory& traj, const PollQuery& q) {
  const std::size_t n = pop.size();
  PollTable table;
  table.group_by = q.group_by;
  table.metric = q.metric;

  std::vector<std::uint8_t> keep(n, 1);
  for (const auto& [attr, labels] : q.filter) {
    std::vector<std::uint8_t> allowed(pop.vocabulary(attr).size(), 0);
    for (const auto& l : labels)
      if (auto c = pop.vocabulary(attr).find(l)) allowed[*c] = 1;
    const auto codes = pop.attribute(attr);
    for (std::size_t i = 0; i < n; ++i)
      if (!allowed[codes[i]]) keep[i] = 0;
  }

  std::vector<const Snapshot*> window;
  if (q.metric != PollMetric::median_income) {
    for (const auto& s : traj.snapshots)
      if ((q.from_step < 0 || s.step >= q.from_step) && (q.to_step < 0 || s.step <= q.to_step))
        window.push_back(&s);
    if (window.empty())
      throw UsageError("poll: metric '" + std::string(metric_name(q.metric)) +
                       "' needs per-agent snapshots in the query window (set execution.snapshot_every)");
    for (const auto* s : window)
      if (s->occupancy.size() != n) throw UsageError("poll: snapshot size does not match the population");
  }

  std::map<std::vector<std::uint16_t>, std::vector<std::uint32_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    std::vector<std::uint16_t> key;
    key.reserve(q.group_by.size());
    for (Attribute a : q.group_by) key.push_back(pop.attribute(a)[i]);
    groups[std::move(key)].push_back(static_cast<std::uint32_t>(i));
  }

  for (const auto& [key, members] : groups) {
    PollRow row;
    for (std::size_t k = 0; k < key.size(); ++k) row.group.push_back(pop.vocabulary(q.group_by[k]).label(key[k]));
    row.count = members.size();
    const double m = static_cast<double>(members.size());
    switch (q.metric) {
      case PollMetric::median_income: {
        std::vector<double> incomes;
        incomes.reserve(members.size());
        for (auto i : members) {
          const auto& label = pop.label(Attribute::income_band, i);
          auto v = income_value(label);
          if (!v) throw UsageError("poll: income label '" + label + "' is not numeric");
          incomes.push_back(*v);
        }
        std::sort(incomes.begin(), incomes.end());
        row.value = incomes[(incomes.size() - 1) / 2];
        break;
      }
      case PollMetric::infection_rate: {
        double s = 0.0;
        for (auto i : members) s += window.back()->ever_infected[i];
        row.value = s / m;
        break;
      }
      case PollMetric::isolation_rate:
      case PollMetric::mean_willingness: {
        double s = 0.0;
        for (const auto* snap : window) {
          const auto& v = q.metric == PollMetric::isolation_rate ? snap->isolating : snap->willingness;
          for (auto i : members) s += v[i];
        }
        row.value = s / (m * static_cast<double>(window.size()));
        break;
      }
      case PollMetric::unemployment_rate: {
        std::vector<double> w;
        w.reserve(members.size());
        for (auto i : members) w.push_back(window.back()->willingness[i]);
        const std::vector<double> iur = traj.iur.empty() ? std::vector<double>{0.0} : traj.iur;
        const int month = std::min(window.back()->step / 30, static_cast<int>(iur.size()) - 1);
        row.value = unemployment_rate(w, traj.gamma0, traj.gamma1, iur, month);
        break;
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

json PollTable::to_json() const {
  json groups = json::array();
  for (Attribute a : group_by) groups.push_back(attribute_name(a));
  json rows_j = json::array();
  for (const auto& r : rows) rows_j.push_back({{"group", r.group}, {"value", r.value}, {"count", r.count}});
  return {{"group_by", groups}, {"metric", metric_name(metric)}, {"rows", rows_j}};
}

void PollTable::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  for (Attribute a : group_by) out << attribute_name(a) << ',';
  out << metric_name(metric) << ",count\n";
  for (const auto& r : rows) {
    for (const auto& g : r.group) out << g << ',';
    out << r.value << ',' << r.count << '\n';
  }
}

namespace {

/// Runs fn(0..n-1) on up to `workers` threads; rethrows the lowest-index failure.
template <class Fn>
void run_jobs(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = default_threads();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

unsigned inner_threads(const SimulationConfig& cfg, unsigned workers, std::size_t jobs) {
  if (cfg.execution.threads != 0) return cfg.execution.threads;
  if (workers == 0) workers = default_threads();
  const auto w = std::min<std::size_t>(workers, std::max<std::size_t>(jobs, 1));
  return std::max(1u, default_threads() / static_cast<unsigned>(w));
}

Trajectory run_with(const SimulationConfig& cfg, const World& world, const ScenarioOptions& opts) {
  if (opts.provider && cfg.behavior.mode != BehaviorMode::heuristic) {
    auto p = opts.provider();
    return run(cfg, world, p.get());
  }
  return run(cfg, world);
}

bool touches_world(const ScenarioPatch& patch) {
  for (const auto& [path, _] : patch.overrides)
    if (path.rfind("population.", 0) == 0 || path.rfind("graph.", 0) == 0 || path == "population" ||
        path == "graph")
      return true;
  return false;
}

Spread spread_of(const std::vector<double>& v) {
  Spread s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  return s;
}

json spread_json(const Spread& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

double final_deaths(const Trajectory& t) { return t.daily.empty() ? 0.0 : t.daily.back().deaths; }

}  // namespace

CounterfactualReport counterfactual(const SimulationConfig& cfg, const ScenarioPatch& patch, int n_seeds,
                                    const ScenarioOptions& opts) {
  if (n_seeds < 1) throw UsageError("counterfactual: n_seeds must be >= 1");
  const SimulationConfig patched_cfg = apply_patch(cfg, patch);
  const World world = build_world(cfg);
  std::optional<World> patched_world;
  if (touches_world(patch)) patched_world = build_world(patched_cfg);
  const World& pw = patched_world ? *patched_world : world;

  CounterfactualReport rep;
  rep.baseline_hash = config_hash(cfg);
  rep.patched_hash = config_hash(patched_cfg);
  rep.patch = json::object();
  for (const auto& [path, value] : patch.overrides) rep.patch[path] = value;
  const auto n = static_cast<std::size_t>(n_seeds);
  for (std::size_t k = 0; k < n; ++k) rep.seeds.push_back(cfg.seed + k);
  rep.baseline.resize(n);
  rep.patched.resize(n);

  const unsigned threads = inner_threads(cfg, opts.concurrency, 2 * n);
  run_jobs(2 * n, opts.concurrency, [&](std::size_t job) {
    const std::size_t k = job / 2;
    SimulationConfig c = job % 2 == 0 ? cfg : patched_cfg;
    c.seed = rep.seeds[k];
    c.execution.threads = threads;
    if (job % 2 == 0)
      rep.baseline[k] = run_with(c, world, opts);
    else
      rep.patched[k] = run_with(c, pw, opts);
  });

  const std::size_t steps = static_cast<std::size_t>(cfg.horizon_steps);
  rep.active_delta.resize(steps);
  rep.cumulative_delta.resize(steps);
  std::vector<std::vector<double>> active(steps), cumulative(steps);
  std::vector<double> peak, peak_step, cum_total;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& b = rep.baseline[k];
    const auto& p = rep.patched[k];
    PairedRun r;
    r.seed = rep.seeds[k];
    const auto ab = b.series(&DailyAggregates::active_infections);
    const auto ap = p.series(&DailyAggregates::active_infections);
    const auto cb = b.cumulative_infections();
    const auto cp = p.cumulative_infections();
    if (!ab.empty()) {
      const auto ib = std::max_element(ab.begin(), ab.end());
      const auto ip = std::max_element(ap.begin(), ap.end());
      r.peak_baseline = *ib;
      r.peak_patched = *ip;
      r.peak_step_baseline = static_cast<int>(ib - ab.begin());
      r.peak_step_patched = static_cast<int>(ip - ap.begin());
      r.cumulative_baseline = cb.back();
      r.cumulative_patched = cp.back();
    }
    r.deaths_baseline = final_deaths(b);
    r.deaths_patched = final_deaths(p);
    for (std::size_t t = 0; t < std::min({steps, ab.size(), ap.size()}); ++t) {
      active[t].push_back(ap[t] - ab[t]);
      cumulative[t].push_back(cp[t] - cb[t]);
    }
    peak.push_back(r.peak_patched - r.peak_baseline);
    peak_step.push_back(r.peak_step_patched - r.peak_step_baseline);
    cum_total.push_back(r.cumulative_patched - r.cumulative_baseline);
    rep.runs.push_back(r);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    rep.active_delta[t] = spread_of(active[t]);
    rep.cumulative_delta[t] = spread_of(cumulative[t]);
  }
  rep.peak_delta = spread_of(peak);
  rep.peak_step_delta = spread_of(peak_step);
  rep.cumulative_total_delta = spread_of(cum_total);
  return rep;
}

json CounterfactualReport::to_json() const {
  json runs_j = json::array();
  for (const auto& r : runs)
    runs_j.push_back({{"seed", r.seed},
                      {"peak_baseline", r.peak_baseline},
                      {"peak_patched", r.peak_patched},
                      {"peak_step_baseline", r.peak_step_baseline},
                      {"peak_step_patched", r.peak_step_patched},
                      {"cumulative_baseline", r.cumulative_baseline},
                      {"cumulative_patched", r.cumulative_patched},
                      {"deaths_baseline", r.deaths_baseline},
                      {"deaths_patched", r.deaths_patched}});
  return {{"baseline_hash", baseline_hash},
          {"patched_hash", patched_hash},
          {"patch", patch},
          {"seeds", seeds},
          {"runs", runs_j},
          {"peak_delta", spread_json(peak_delta)},
          {"peak_step_delta", spread_json(peak_step_delta)},
          {"cumulative_delta", spread_json(cumulative_total_delta)}};
}

void CounterfactualReport::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "step,active_mean,active_min,active_max,cumulative_mean,cumulative_min,cumulative_max\n";
  for (std::size_t t = 0; t < active_delta.size(); ++t) {
    const auto& a = active_delta[t];
    const auto& c = cumulative_delta[t];
    out << t << ',' << a.mean << ',' << a.min << ',' << a.max << ',' << c.mean << ',' << c.min << ',' << c.max
        << '\n';
  }
}

void set_protocol_field(VaccineProtocol& p, const std::string& field, double value) {
  if (field == "first_dose_efficacy") {
    p.first_dose_efficacy = value;
  } else if (field == "second_dose_efficacy") {
    p.second_dose_efficacy = value;
  } else if (field == "second_dose_dropout") {
    p.second_dose_dropout = value;
  } else if (field == "dose_gap" || field == "daily_supply" || field == "start_step") {
    if (value != std::floor(value)) throw UsageError("sweep: '" + field + "' takes integer values");
    if (field == "dose_gap") p.dose_gap = static_cast<int>(value);
    if (field == "daily_supply") p.daily_supply = static_cast<std::int64_t>(value);
    if (field == "start_step") p.start_step = static_cast<int>(value);
  } else {
    throw UsageError("sweep: unknown vaccine protocol field '" + field + "'");
  }
}

bool FitnessCurve::non_increasing() const {
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    if (p.undefined) continue;
    if (p.fitness > prev) return false;
    prev = p.fitness;
  }
  return true;
}

json FitnessCurve::to_json() const {
  json pts = json::array();
  for (const auto& p : points)
    pts.push_back({{"value", p.value},
                   {"fitness", number_or_null(p.fitness)},
                   {"undefined", p.undefined},
                   {"deaths_a", p.deaths_a},
                   {"deaths_b", p.deaths_b}});
  return {{"field", field},
          {"points", pts},
          {"threshold", threshold ? json(*threshold) : json(nullptr)},
          {"non_increasing", non_increasing()},
          {"runs", runs}};
}

void FitnessCurve::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "value,fitness,deaths_a,deaths_b,undefined\n";
  for (const auto& p : points)
    out << p.value << ',' << (p.undefined ? std::string("") : std::to_string(p.fitness)) << ',' << p.deaths_a
        << ',' << p.deaths_b << ',' << (p.undefined ? 1 : 0) << '\n';
}

FitnessCurve prospective_sweep(const SimulationConfig& cfg, const VaccineProtocol& a, const VaccineProtocol& b,
                               const SweepSpec& sweep, int n_seeds, const ScenarioOptions& opts) {
  if (sweep.grid.empty()) throw UsageError("sweep: grid is empty");
  for (std::size_t i = 1; i < sweep.grid.size(); ++i)
    if (!(sweep.grid[i] > sweep.grid[i - 1])) throw UsageError("sweep: grid must be strictly increasing");
  if (n_seeds < 1) throw UsageError("sweep: n_seeds must be >= 1");
  {
    VaccineProtocol probe = a;
    set_protocol_field(probe, sweep.field, sweep.grid.front());
  }
  const std::size_t seeds = cfg.execution.mode == ExecutionMode::mean_field ? 1 : static_cast<std::size_t>(n_seeds);
  const std::size_t g = sweep.grid.size();
  const World world = build_world(cfg);

  std::vector<double> deaths(g * seeds * 2);
  const unsigned threads = inner_threads(cfg, opts.concurrency, deaths.size());
  run_jobs(deaths.size(), opts.concurrency, [&](std::size_t job) {
    const std::size_t gi = job / (2 * seeds);
    const std::size_t s = (job / 2) % seeds;
    SimulationConfig c = cfg;
    c.vaccine = job % 2 == 0 ? a : b;
    set_protocol_field(c.vaccine, sweep.field, sweep.grid[gi]);
    c.vaccine.validate();
    c.seed = cfg.seed + s;
    c.execution.threads = threads;
    deaths[job] = final_deaths(run_with(c, world, opts));
  });

  FitnessCurve curve;
  curve.field = sweep.field;
  curve.runs = deaths.size();
  for (std::size_t gi = 0; gi < g; ++gi) {
    FitnessPoint p;
    p.value = sweep.grid[gi];
    double ratio = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const double da = deaths[(gi * seeds + s) * 2];
      const double db = deaths[(gi * seeds + s) * 2 + 1];
      p.deaths_a += da / static_cast<double>(seeds);
      p.deaths_b += db / static_cast<double>(seeds);
      if (da <= 0.0) p.undefined = true;
      else ratio += db / da;
    }
    p.fitness = p.undefined ? std::numeric_limits<double>::quiet_NaN() : ratio / static_cast<double>(seeds);
    if (!p.undefined && p.fitness < 1.0 && !curve.threshold) curve.threshold = p.value;
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace abmsim::analysis
