#include "abmsim/engine/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abmsim/behavior/archetype.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/core/parallel.hpp"
#include "abmsim/core/rng.hpp"
#include "abmsim/popgen/io.hpp"

namespace abmsim {

World make_world(Population pop, ContactGraph graph) {
  if (graph.agents() != pop.size()) throw UsageError("make_world: graph and population sizes differ");
  World w;
  w.population = std::move(pop);
  w.population.reset_dynamic();
  w.graph = std::move(graph);
  w.contacts = std::make_shared<const Csr>(w.graph.combined());
  w.warnings = w.graph.warnings;
  return w;
}

World make_world(Population pop, const GraphConfig& graph, std::uint64_t seed) {
  auto g = build_contact_graph(pop, graph, seed);
  return make_world(std::move(pop), std::move(g));
}

World build_world(const SimulationConfig& cfg) {
  Population pop;
  const auto& src = cfg.population;
  if (!src.path.empty()) {
    pop = read_population_csv(std::filesystem::path(src.path));
  } else {
    const auto marginals = src.marginals.empty() ? default_marginals() : read_marginals_json(src.marginals);
    HouseholdSizeDist households = default_household_sizes();
    if (!src.household_size_probs.empty()) households.probs = src.household_size_probs;
    pop = synthesize_population(marginals, src.size, households, cfg.seed);
  }
  if (cfg.behavior.mode == BehaviorMode::per_agent && pop.size() > cfg.behavior.per_agent_cap)
    throw ConfigError("/population", "per_agent behavior allows at most " +
                                           std::to_string(cfg.behavior.per_agent_cap) + " agents, got " +
                                           std::to_string(pop.size()));
  return make_world(std::move(pop), cfg.graph, cfg.seed);
}

StructuralInputs config_inputs(const SimulationConfig& cfg, ad::Tape& tape) {
  std::vector<double> beta;
  if (!cfg.epi.r0.empty())
    for (double r : cfg.epi.r0) beta.push_back(beta_from_r0(r, cfg.epi.infectious_period, cfg.epi.dt));
  else
    beta = cfg.epi.beta;
  return {tape.constant(beta), tape.constant(cfg.labor.gamma0), tape.constant(cfg.labor.gamma1),
          tape.constant(cfg.labor.iur)};
}

AggregateSeries aggregate(std::span<const double> daily, Cadence cadence) {
  AggregateSeries out;
  if (cadence == Cadence::daily) {
    out.values.assign(daily.begin(), daily.end());
    return out;
  }
  const std::size_t w = cadence == Cadence::weekly ? 7 : 30;
  const std::size_t full = daily.size() / w;
  out.dropped_partial = daily.size() % w != 0;
  for (std::size_t k = 0; k < full; ++k) {
    if (cadence == Cadence::weekly) {
      double s = 0.0;
      for (std::size_t d = 0; d < w; ++d) s += daily[k * w + d];
      out.values.push_back(s);
    } else {
      out.values.push_back(daily[k * w + w - 1]);
    }
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// behavior

class BehaviorDriver {
 public:
  BehaviorDriver(const SimulationConfig& cfg, const Population& pop, DecisionProvider* provider,
                 std::uint64_t seed)
      : cfg_(cfg.behavior), seed_(seed) {
    const std::size_t n = pop.size();
    if (cfg_.mode == BehaviorMode::heuristic) {
      keys_.assign(n, 0);
      key_count_ = 1;
      return;
    }
    if (!provider) {
      owned_ = make_provider(cfg_.provider);
      provider = owned_.get();
    }
    provider_ = provider;
    opts_.samples = cfg_.samples;
    opts_.parallelism = cfg_.parallelism;
    opts_.seed = seed;
    opts_.binning = cfg_.context.binning;
    if (cfg_.mode == BehaviorMode::archetype) {
      space_ = ArchetypeKeySpace(pop, cfg_.attributes);
      keys_ = space_.keys(pop);
      key_count_ = space_.size();
      opts_.prompt_template = PromptTemplate::for_attributes(space_.attributes());
    } else {
      keys_.resize(n);
      std::iota(keys_.begin(), keys_.end(), 0u);
      key_count_ = n;
      profiles_.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        for (auto a : kAttributes) profiles_[i][static_cast<std::size_t>(a)] = pop.label(a, i);
      opts_.prompt_template = PromptTemplate::standard(true, true);
    }
  }

  const std::vector<std::uint32_t>& keys() const noexcept { return keys_; }

  /// Per-key probability of `action` under `ctx` at `step`.
  std::vector<double> probs(Action action, const ContextBin& ctx, int step) {
    if (cfg_.mode == BehaviorMode::heuristic)
      return {action == Action::isolate ? cfg_.isolate_probability : cfg_.work_probability};
    if (cfg_.cache) {
      try {
        return table_.slice(key_count_, ctx, action);
      } catch (const UsageError&) {
      }
    }
    opts_.step = step;
    const auto slice = cfg_.mode == BehaviorMode::archetype
                           ? estimate_archetype_probs(*provider_, space_, ctx, action, opts_)
                           : estimate_profile_probs(*provider_, profiles_, ctx, action, opts_);
    slice.throw_if_missing();
    if (cfg_.cache) slice.merge_into(table_);
    return slice.probs;
  }

 private:
  const BehaviorConfig& cfg_;
  std::uint64_t seed_;
  std::unique_ptr<DecisionProvider> owned_;
  DecisionProvider* provider_ = nullptr;
  EstimateOptions opts_;
  ArchetypeKeySpace space_;
  std::vector<AgentProfile> profiles_;
  std::vector<std::uint32_t> keys_;
  std::size_t key_count_ = 1;
  ArchetypeTable table_;
};

// Everything a step needs that does not depend on the execution mode.
struct RunContext {
  const SimulationConfig& cfg;
  const World& world;
  EpiParams epi;
  Population pop;
  BehaviorDriver behavior;
  VaccinationSchedule vaccination;
  std::vector<std::uint8_t> child_codes;
  std::vector<std::uint32_t> household_children;
  double scale = 1.0;
  Trajectory traj;

  RunContext(const SimulationConfig& c, const World& w, DecisionProvider* provider)
      : cfg(c), world(w), epi(resolve_epi(c, w.population)), pop(w.population),
        behavior(c, w.population, provider, c.seed) {
    pop.reset_dynamic();
    vaccination = VaccinationSchedule(pop, cfg.vaccine, cfg.seed);
    child_codes = child_age_codes(pop, cfg.stimulus);
    household_children = children_per_household(pop, child_codes);
    if (cfg.population.full_size && pop.size() > 0)
      scale = *cfg.population.full_size / static_cast<double>(pop.size());
    traj.seed = cfg.seed;
    traj.config_hash = config_hash(cfg);
    traj.mode = std::string(execution_mode_name(cfg.execution.mode));
    traj.scale = scale;
    traj.population = pop.size();
    traj.gamma0 = cfg.labor.gamma0;
    traj.gamma1 = cfg.labor.gamma1;
    traj.iur = cfg.labor.iur;
  }

  ContextBin context(int t) const {
    const double payment = cfg.stimulus.month_payment(t);
    std::vector<double> series(traj.daily.size());
    for (std::size_t s = 0; s < series.size(); ++s) series[s] = traj.daily[s].new_infections;
    return context_from_series(series, t, cfg.behavior.context, payment);
  }

  std::vector<double> vaccine_efficacy() const {
    if (!cfg.vaccine.enabled) return {};
    std::vector<double> e(pop.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = cfg.vaccine.efficacy(pop.doses_received[i]);
    return e;
  }

  std::vector<double> per_agent(const std::vector<double>& key_probs) const {
    const auto& keys = behavior.keys();
    std::vector<double> out(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) out[i] = key_probs[keys[i]];
    return out;
  }
};

// ---------------------------------------------------------------------------
// stochastic kernel

struct StochasticTape {
  ad::Tape* tape = nullptr;
  const StructuralInputs* inputs = nullptr;
  std::vector<ad::TapeValue> exposures;
  std::vector<ad::TapeValue> unemployment;
};

ad::TapeValue step_value(const ad::TapeValue& series, int index) {
  if (series.size() == 1) return series;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(index), series.size() - 1);
  return ad::slice(series, i, 1);
}

void run_stochastic(RunContext& rc, StochasticTape* st) {
  const auto& cfg = rc.cfg;
  auto& pop = rc.pop;
  auto& epi = rc.epi;
  const std::size_t n = pop.size();
  const unsigned threads = cfg.execution.threads;
  const std::uint64_t seed = cfg.seed;
  const Csr& graph = *rc.world.contacts;

  // initial infections: the round(f N) agents with the smallest seeded priority
  const auto k0 = static_cast<std::size_t>(std::llround(epi.initial_infected_fraction * static_cast<double>(n)));
  if (k0 > 0) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> prio(n);
    for (std::size_t i = 0; i < n; ++i)
      prio[i] = {RngStream(seed, 0, pop.agent_id[i], Channel::seeding).next_u64(), static_cast<std::uint32_t>(i)};
    std::nth_element(prio.begin(), prio.begin() + static_cast<std::ptrdiff_t>(k0 - 1), prio.end());
    for (std::size_t j = 0; j < k0; ++j) {
      pop.stage[prio[j].second] = Stage::I;
      pop.stage_timer[prio[j].second] = epi.infectious_period;
    }
  }
  rc.traj.initial_infected = static_cast<double>(k0) * rc.scale;

  TestingState testing;
  testing.resize(n);
  std::vector<double> x(n, 0.0);
  std::vector<std::uint8_t> choose(n, 0);
  std::vector<double> willingness(n, 1.0);

  auto snapshot = [&](int step) {
    Snapshot s;
    s.step = step;
    s.occupancy.resize(n);
    s.ever_infected.resize(n);
    s.isolating.resize(n);
    s.willingness.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.occupancy[i] = {};
      s.occupancy[i][static_cast<std::size_t>(pop.stage[i])] = 1.0f;
      s.ever_infected[i] = pop.stage[i] == Stage::S ? 0.0f : 1.0f;
      s.isolating[i] = static_cast<float>(pop.isolating[i]);
      s.willingness[i] = static_cast<float>(willingness[i]);
    }
    rc.traj.snapshots.push_back(std::move(s));
  };
  if (cfg.snapshot_at(0)) snapshot(0);

  for (int t = 0; t < cfg.horizon_steps; ++t) {
    try {
      const ContextBin ctx = rc.context(t);
      const auto p_iso = rc.behavior.probs(Action::isolate, ctx, t);
      const auto p_work = rc.behavior.probs(Action::work, ctx, t);
      const auto& keys = rc.behavior.keys();
      const int month = month_boundary(t);

      const auto iso_step = action_stream_step(t, Action::isolate);
      const auto work_step = action_stream_step(t, Action::work);
      const std::size_t chunks = parallel_chunks(n, threads);
      std::vector<std::array<std::size_t, 2>> iso_counts(chunks, {0, 0});
      parallel_for(n, threads, [&](std::size_t b, std::size_t e, unsigned c) {
        for (std::size_t i = b; i < e; ++i) {
          const bool living = pop.stage[i] != Stage::M;
          bool iso = false;
          if (living) {
            RngStream rng(seed, iso_step, pop.agent_id[i], Channel::behavior);
            iso = rng.uniform() < p_iso[keys[i]] || testing.forced(i, t);
            ++iso_counts[c][0];
            if (iso) ++iso_counts[c][1];
          }
          pop.isolating[i] = iso ? 1 : 0;
          x[i] = pop.stage[i] == Stage::I && !iso ? 1.0 : 0.0;
          if (month >= 0) {
            RngStream rng(seed, work_step, pop.agent_id[i], Channel::behavior);
            willingness[i] = rng.uniform() < p_work[keys[i]] ? 1.0 : 0.0;
            pop.willingness[i] = willingness[i];
            pop.employed[i] = willingness[i] > 0.0 ? 1 : 0;
          }
        }
      });
      std::size_t living = 0, isolating = 0;
      for (const auto& c : iso_counts) {
        living += c[0];
        isolating += c[1];
      }

      const double beta = st ? step_value(st->inputs->beta, t).scalar() : epi.beta_at(t);
      const auto efficacy = rc.vaccine_efficacy();
      auto exposure = exposure_step(graph, pop, epi, x, efficacy, beta, seed, t, threads);
      auto prog = seirm_progress(pop, epi, seed, t, threads);
      const std::size_t direct = apply_exposures(pop, epi, exposure.exposed, prog.onset);
      rc.vaccination.step(pop, t);
      if (cfg.testing.enabled) testing_step(pop, cfg.testing, epi, prog.onset, testing, seed, t);
      (void)stimulus_step(pop, cfg.stimulus, t, rc.child_codes, rc.household_children);

      DailyAggregates d;
      std::array<std::size_t, 5> comp{};
      for (std::size_t i = 0; i < n; ++i) ++comp[static_cast<std::size_t>(pop.stage[i])];
      for (std::size_t s = 0; s < 5; ++s) d.compartments[s] = static_cast<double>(comp[s]) * rc.scale;
      d.new_exposures = static_cast<double>(exposure.count) * rc.scale;
      d.new_infections = static_cast<double>(prog.new_infections + direct) * rc.scale;
      d.active_infections = d.compartments[2];
      d.deaths = d.compartments[4];
      d.isolation_rate = living ? static_cast<double>(isolating) / static_cast<double>(living) : 0.0;
      rc.traj.daily.push_back(d);

      if (st) {
        const double coef = exposure.expected_dbeta * rc.scale;
        st->exposures.push_back(st->tape->record(
            "st_exposures", {d.new_exposures}, {step_value(st->inputs->beta, t)},
            [coef](const ad::Tape& tp, std::size_t self, ad::Tape::Adjoints& adj) {
              adj[tp.parent(self, 0)][0] += adj[self][0] * coef;
            }));
      }
      if (month >= 0) {
        const double mean_w = n ? std::accumulate(willingness.begin(), willingness.end(), 0.0) / static_cast<double>(n) : 0.0;
        MonthlyAggregates m;
        m.mean_willingness = mean_w;
        if (st) {
          auto mu = unemployment_rate(st->tape->constant(mean_w), st->inputs->gamma0, st->inputs->gamma1,
                                      step_value(st->inputs->iur, month));
          m.unemployment_rate = mu.scalar();
          st->unemployment.push_back(mu);
        } else {
          m.unemployment_rate = std::clamp(
              cfg.labor.gamma0 * mean_w + cfg.labor.gamma1 * cfg.labor.iur_at(month), 0.0, 1.0);
        }
        rc.traj.monthly.push_back(m);
      }
      if (cfg.snapshot_at(t + 1)) snapshot(t + 1);
    } catch (const RunError&) {
      throw;
    } catch (const std::exception& e) {
      throw RunError(t, e.what(), rc.traj);
    }
  }
}

// ---------------------------------------------------------------------------
// mean-field kernel, written once over two vector backends

struct PlainOps {
  using V = std::vector<double>;
  using C = std::shared_ptr<const std::vector<double>>;

  static std::span<const double> values(const V& v) { return v; }
  static V constant(std::vector<double> v) { return v; }
  static V add(const V& a, const V& b) { return zip(a, b, [](double x, double y) { return x + y; }); }
  static V sub(const V& a, const V& b) { return zip(a, b, [](double x, double y) { return x - y; }); }
  static V mul(const V& a, const V& b) { return zip(a, b, [](double x, double y) { return x * y; }); }
  static V scale(const V& a, double c) {
    V out(a);
    for (auto& x : out) x *= c;
    return out;
  }
  static V mul_const(const V& a, const C& c) {
    V out(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*c)[i];
    return out;
  }
  static V spmv(const std::shared_ptr<const Csr>& m, const V& a) {
    V y(m->rows(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double s = 0.0;
      for (std::uint64_t k = m->row_ptr[i]; k < m->row_ptr[i + 1]; ++k)
        s += static_cast<double>(m->weight[k]) * a[m->col[k]];
      y[i] = s;
    }
    return y;
  }
  static V one_minus_exp_neg(const V& a) {
    V out(a);
    for (auto& x : out) x = 1.0 - std::exp(-x);
    return out;
  }
  static V sum(const V& a) { return {std::accumulate(a.begin(), a.end(), 0.0)}; }
  static V clamp(const V& a, double lo, double hi) {
    V out(a);
    for (auto& x : out) x = std::clamp(x, lo, hi);
    return out;
  }

 private:
  template <class F>
  static V zip(const V& a, const V& b, F f) {
    if (a.size() == 1 && b.size() != 1) return zip(V(b.size(), a[0]), b, f);
    if (b.size() == 1 && a.size() != 1) return zip(a, V(a.size(), b[0]), f);
    V out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
};

struct TapeOps {
  using V = ad::TapeValue;
  using C = std::shared_ptr<const std::vector<double>>;

  ad::Tape* tape;

  std::span<const double> values(const V& v) const { return v.values(); }
  V constant(std::vector<double> v) const { return tape->constant(std::move(v)); }
  static V add(const V& a, const V& b) { return ad::add(a, b); }
  static V sub(const V& a, const V& b) { return ad::sub(a, b); }
  static V mul(const V& a, const V& b) { return ad::mul(a, b); }
  static V scale(const V& a, double c) { return ad::scale(a, c); }
  static V mul_const(const V& a, const C& c) { return ad::mul_const(a, c); }
  static V spmv(const std::shared_ptr<const Csr>& m, const V& a) { return ad::spmv(m, a); }
  static V one_minus_exp_neg(const V& a) { return ad::one_minus(ad::exp(ad::neg(a))); }
  static V sum(const V& a) { return ad::sum(a); }
  static V clamp(const V& a, double lo, double hi) { return ad::clamp_st(a, lo, hi); }
};

template <class Ops>
struct MeanFieldInputs {
  typename Ops::V beta;  // size 1 or horizon
  typename Ops::V gamma0, gamma1;
  typename Ops::V iur;
};

template <class Ops>
struct MeanFieldOutputs {
  std::vector<typename Ops::V> new_infections;
  std::vector<typename Ops::V> deaths;
  std::vector<typename Ops::V> unemployment;
};

template <class Ops>
typename Ops::V pick(const Ops& ops, const typename Ops::V& series, int index) {
  const auto vals = ops.values(series);
  if (vals.size() == 1) return series;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(index), vals.size() - 1);
  if constexpr (std::is_same_v<Ops, PlainOps>)
    return {vals[i]};
  else
    return ad::slice(series, i, 1);
}

template <class Ops>
MeanFieldOutputs<Ops> run_mean_field(RunContext& rc, const Ops& ops, const MeanFieldInputs<Ops>& in) {
  using V = typename Ops::V;
  using C = typename Ops::C;
  const auto& cfg = rc.cfg;
  const auto& epi = rc.epi;
  auto& pop = rc.pop;
  const std::size_t n = pop.size();
  const int L = epi.latent_period;
  const int D = epi.infectious_period;
  const auto graph = rc.world.contacts;
  const double sc = rc.scale;

  // per-agent susceptibility * dt / degree (0 for isolated agents)
  std::vector<double> base(n, 0.0);
  const auto age = pop.attribute(Attribute::age_band);
  for (std::size_t i = 0; i < n; ++i) {
    const auto deg = graph->degree(i);
    if (deg > 0) base[i] = epi.susceptibility_of(age[i]) * epi.dt / static_cast<double>(deg);
  }
  std::vector<double> mort(n);
  for (std::size_t i = 0; i < n; ++i) mort[i] = epi.mortality_of(age[i]);
  const C c_mort = std::make_shared<const std::vector<double>>(mort);
  std::vector<double> surv(n);
  for (std::size_t i = 0; i < n; ++i) surv[i] = 1.0 - mort[i];
  const C c_surv = std::make_shared<const std::vector<double>>(surv);

  // forced isolation multiplier per infectious-timer slot k = 1..D
  std::vector<double> slot_free(static_cast<std::size_t>(D) + 1, 1.0);
  if (cfg.testing.enabled)
    for (int k = 1; k <= D; ++k)
      if (D - k + 1 >= cfg.testing.result_delay) slot_free[static_cast<std::size_t>(k)] = 1.0 - cfg.testing.sensitivity;

  const double f0 = epi.initial_infected_fraction;
  V S = ops.constant(std::vector<double>(n, 1.0 - f0));
  std::vector<V> E(static_cast<std::size_t>(L) + 1);
  std::vector<V> I(static_cast<std::size_t>(D) + 1);
  const V zero = ops.constant(std::vector<double>(n, 0.0));
  for (int k = 1; k <= L; ++k) E[static_cast<std::size_t>(k)] = zero;
  for (int k = 1; k <= D; ++k) I[static_cast<std::size_t>(k)] = zero;
  I[static_cast<std::size_t>(D)] = ops.constant(std::vector<double>(n, f0));
  V R = zero;
  V M = zero;
  rc.traj.initial_infected = f0 * static_cast<double>(n) * sc;

  std::vector<double> willingness(n, 1.0);
  std::vector<double> iso_prob(n, 0.0);
  MeanFieldOutputs<Ops> out;

  auto snapshot = [&](int step) {
    Snapshot s;
    s.step = step;
    s.occupancy.resize(n);
    s.ever_infected.resize(n);
    s.isolating.resize(n);
    s.willingness.resize(n);
    const auto sv = ops.values(S), rv = ops.values(R), mv = ops.values(M);
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0, inf = 0.0;
      for (int k = 1; k <= L; ++k) e += ops.values(E[static_cast<std::size_t>(k)])[i];
      for (int k = 1; k <= D; ++k) inf += ops.values(I[static_cast<std::size_t>(k)])[i];
      s.occupancy[i] = {static_cast<float>(sv[i]), static_cast<float>(e), static_cast<float>(inf),
                        static_cast<float>(rv[i]), static_cast<float>(mv[i])};
      s.ever_infected[i] = static_cast<float>(1.0 - sv[i]);
      s.isolating[i] = static_cast<float>(iso_prob[i]);
      s.willingness[i] = static_cast<float>(willingness[i]);
    }
    rc.traj.snapshots.push_back(std::move(s));
  };
  if (cfg.snapshot_at(0)) snapshot(0);

  for (int t = 0; t < cfg.horizon_steps; ++t) {
    try {
      const ContextBin ctx = rc.context(t);
      const auto a = rc.per_agent(rc.behavior.probs(Action::isolate, ctx, t));
      const auto w = rc.per_agent(rc.behavior.probs(Action::work, ctx, t));
      const int month = month_boundary(t);
      if (month >= 0) willingness = w;

      // isolation share among the living, using the state the step started from
      double living = 0.0, iso = 0.0;
      {
        const auto mv_now = ops.values(M);
        for (std::size_t i = 0; i < n; ++i) {
          double forced = 0.0;
          if (cfg.testing.enabled)
            for (int k = 1; k <= D; ++k)
              if (slot_free[static_cast<std::size_t>(k)] < 1.0)
                forced += cfg.testing.sensitivity * ops.values(I[static_cast<std::size_t>(k)])[i];
          const double alive = 1.0 - mv_now[i];
          iso_prob[i] = alive - std::max(0.0, alive - forced) * (1.0 - a[i]);
          living += alive;
          iso += iso_prob[i];
        }
      }
      // expected infectious pressure
      V weighted;
      bool first = true;
      for (int k = 1; k <= D; ++k) {
        const double f = slot_free[static_cast<std::size_t>(k)];
        if (f == 0.0) continue;
        V term = f == 1.0 ? I[static_cast<std::size_t>(k)] : ops.scale(I[static_cast<std::size_t>(k)], f);
        weighted = first ? term : ops.add(weighted, term);
        first = false;
      }
      auto not_iso = std::make_shared<std::vector<double>>(n);
      for (std::size_t i = 0; i < n; ++i) (*not_iso)[i] = 1.0 - a[i];
      const V x = first ? zero : ops.mul_const(weighted, not_iso);

      auto coef = std::make_shared<std::vector<double>>(base);
      if (cfg.vaccine.enabled)
        for (std::size_t i = 0; i < n; ++i) (*coef)[i] *= 1.0 - cfg.vaccine.efficacy(pop.doses_received[i]);
      const V rate = ops.mul(pick(ops, in.beta, t), ops.mul_const(ops.spmv(graph, x), coef));
      const V new_e = ops.mul(S, ops.one_minus_exp_neg(rate));
      S = ops.sub(S, new_e);

      const V onset = L >= 1 ? E[1] : new_e;
      const V leaving = I[1];
      for (int k = 1; k < L; ++k) E[static_cast<std::size_t>(k)] = E[static_cast<std::size_t>(k) + 1];
      if (L >= 1) E[static_cast<std::size_t>(L)] = new_e;
      for (int k = 1; k < D; ++k) I[static_cast<std::size_t>(k)] = I[static_cast<std::size_t>(k) + 1];
      I[static_cast<std::size_t>(D)] = onset;
      R = ops.add(R, ops.mul_const(leaving, c_surv));
      M = ops.add(M, ops.mul_const(leaving, c_mort));

      rc.vaccination.step(pop, t);
      (void)stimulus_step(pop, cfg.stimulus, t, rc.child_codes, rc.household_children);

      const V onset_total = ops.sum(onset);
      const V deaths_total = ops.sum(M);
      out.new_infections.push_back(onset_total);
      out.deaths.push_back(deaths_total);

      DailyAggregates d;
      const auto sv = ops.values(S), rv = ops.values(R), mv = ops.values(M);
      double e_tot = 0.0, i_tot = 0.0;
      for (int k = 1; k <= L; ++k)
        for (double v : ops.values(E[static_cast<std::size_t>(k)])) e_tot += v;
      for (int k = 1; k <= D; ++k)
        for (double v : ops.values(I[static_cast<std::size_t>(k)])) i_tot += v;
      d.compartments = {std::accumulate(sv.begin(), sv.end(), 0.0) * sc, e_tot * sc, i_tot * sc,
                        std::accumulate(rv.begin(), rv.end(), 0.0) * sc,
                        std::accumulate(mv.begin(), mv.end(), 0.0) * sc};
      d.new_exposures = ops.values(ops.sum(new_e))[0] * sc;
      d.new_infections = ops.values(onset_total)[0] * sc;
      d.active_infections = d.compartments[2];
      d.deaths = d.compartments[4];

      d.isolation_rate = living > 0.0 ? iso / living : 0.0;
      rc.traj.daily.push_back(d);

      if (month >= 0) {
        const double mean_w = n ? std::accumulate(willingness.begin(), willingness.end(), 0.0) / static_cast<double>(n) : 0.0;
        const V mw = ops.constant({mean_w});
        const V mu = ops.clamp(ops.add(ops.mul(in.gamma0, mw), ops.mul(in.gamma1, pick(ops, in.iur, month))), 0.0, 1.0);
        out.unemployment.push_back(mu);
        rc.traj.monthly.push_back({ops.values(mu)[0], mean_w});
      }
      if (cfg.snapshot_at(t + 1)) snapshot(t + 1);
    } catch (const RunError&) {
      throw;
    } catch (const std::exception& e) {
      throw RunError(t, e.what(), rc.traj);
    }
  }
  if (sc != 1.0) {
    for (auto& v : out.new_infections) v = ops.scale(v, sc);
    for (auto& v : out.deaths) v = ops.scale(v, sc);
  }
  return out;
}

ad::TapeValue concat_or_empty(ad::Tape& tape, const std::vector<ad::TapeValue>& parts) {
  if (parts.empty()) return tape.constant(std::vector<double>{});
  return ad::concat(parts);
}

void check_inputs(const SimulationConfig& cfg, const StructuralInputs& in) {
  const auto h = static_cast<std::size_t>(std::max(cfg.horizon_steps, 1));
  const auto months = static_cast<std::size_t>(std::max(cfg.months(), 1));
  if (!in.beta.valid() || (in.beta.size() != 1 && in.beta.size() != h))
    throw UsageError("run_taped: beta must have size 1 or horizon");
  if (!in.gamma0.valid() || !in.gamma1.valid() || in.gamma0.size() != 1 || in.gamma1.size() != 1)
    throw UsageError("run_taped: gamma0 and gamma1 must be scalars");
  if (!in.iur.valid() || (in.iur.size() != 1 && in.iur.size() < months))
    throw UsageError("run_taped: iur must have size 1 or at least the number of months");
  for (double b : in.beta.values())
    if (!(b >= 0.0)) throw DomainError("run_taped: beta must be >= 0");
}

}  // namespace

Trajectory run(const SimulationConfig& cfg, const World& world, DecisionProvider* provider) {
  if (cfg.horizon_steps < 0) throw DomainError("horizon must be >= 0");
  RunContext rc(cfg, world, provider);
  if (cfg.execution.mode == ExecutionMode::stochastic) {
    run_stochastic(rc, nullptr);
  } else {
    PlainOps ops;
    MeanFieldInputs<PlainOps> in;
    in.beta = rc.epi.beta;
    in.gamma0 = {cfg.labor.gamma0};
    in.gamma1 = {cfg.labor.gamma1};
    in.iur = cfg.labor.iur;
    run_mean_field(rc, ops, in);
  }
  return std::move(rc.traj);
}

TapedOutputs run_taped(const SimulationConfig& cfg, const World& world, ad::Tape& tape,
                       const StructuralInputs& inputs, Trajectory* trajectory,
                       DecisionProvider* provider) {
  check_inputs(cfg, inputs);
  RunContext rc(cfg, world, provider);
  rc.traj.gamma0 = inputs.gamma0.scalar();
  rc.traj.gamma1 = inputs.gamma1.scalar();
  rc.traj.iur.assign(inputs.iur.values().begin(), inputs.iur.values().end());
  TapedOutputs out;
  if (cfg.execution.mode == ExecutionMode::stochastic) {
    StochasticTape st;
    st.tape = &tape;
    st.inputs = &inputs;
    run_stochastic(rc, &st);
    std::vector<ad::TapeValue> onset;
    const int L = rc.epi.latent_period;
    std::vector<ad::TapeValue> deaths;
    for (int t = 0; t < cfg.horizon_steps; ++t) {
      onset.push_back(t >= L ? st.exposures[static_cast<std::size_t>(t - L)]
                             : tape.constant(rc.traj.daily[static_cast<std::size_t>(t)].new_infections));
      deaths.push_back(tape.constant(rc.traj.daily[static_cast<std::size_t>(t)].deaths));
    }
    out.new_infections = concat_or_empty(tape, onset);
    out.deaths = concat_or_empty(tape, deaths);
    out.unemployment = concat_or_empty(tape, st.unemployment);
  } else {
    TapeOps ops{&tape};
    MeanFieldInputs<TapeOps> in{inputs.beta, inputs.gamma0, inputs.gamma1, inputs.iur};
    auto mf = run_mean_field(rc, ops, in);
    out.new_infections = concat_or_empty(tape, mf.new_infections);
    out.deaths = concat_or_empty(tape, mf.deaths);
    out.unemployment = concat_or_empty(tape, mf.unemployment);
  }
  if (trajectory) *trajectory = std::move(rc.traj);
  return out;
}

}  // namespace abmsim
