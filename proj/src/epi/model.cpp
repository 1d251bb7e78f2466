#include "abmsim/epi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abmsim/core/error.hpp"
#include "abmsim/core/ops.hpp"
#include "abmsim/core/parallel.hpp"
#include "abmsim/core/rng.hpp"

namespace abmsim {

double EpiParams::beta_at(int t) const {
  if (beta.empty()) return 0.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), beta.size() - 1);
  return beta[i];
}

double EpiParams::susceptibility_of(std::uint16_t age_code) const {
  return susceptibility.empty() ? 1.0 : susceptibility.at(age_code);
}

double EpiParams::mortality_of(std::uint16_t age_code) const {
  return mortality.empty() ? 0.0 : mortality.at(age_code);
}

void EpiParams::validate() const {
  for (double b : beta)
    if (!(b >= 0.0) || !std::isfinite(b)) throw DomainError("epi: beta must be finite and >= 0");
  for (double s : susceptibility)
    if (!(s >= 0.0)) throw DomainError("epi: susceptibility must be >= 0");
  for (double m : mortality)
    if (!(m >= 0.0 && m <= 1.0)) throw DomainError("epi: mortality must be in [0, 1]");
  if (latent_period < 0) throw DomainError("epi: latent_period must be >= 0");
  if (infectious_period < 1) throw DomainError("epi: infectious_period must be >= 1");
  if (!(dt > 0.0)) throw DomainError("epi: dt must be > 0");
  if (!(initial_infected_fraction >= 0.0 && initial_infected_fraction <= 1.0))
    throw DomainError("epi: initial_infected_fraction must be in [0, 1]");
}

double beta_from_r0(double r0, int infectious_period, double dt) {
  if (!(r0 >= 0.0)) throw DomainError("R0 must be >= 0");
  if (infectious_period < 1 || !(dt > 0.0)) throw DomainError("beta_from_r0: bad period or dt");
  return r0 / (static_cast<double>(infectious_period) * dt);
}

double r0_from_beta(double beta, int infectious_period, double dt) {
  return beta * static_cast<double>(infectious_period) * dt;
}

double infection_probability(double beta, double s, double n, double infected_sum, double dt) {
  if (beta < 0.0 || s < 0.0 || n < 0.0 || infected_sum < 0.0 || dt < 0.0)
    throw DomainError("infection_probability: negative input");
  if (infected_sum == 0.0) return 0.0;
  if (n == 0.0) throw UsageError("infection_probability: infected neighbours but degree 0");
  return -std::expm1(-beta * s * dt * infected_sum / n);
}

std::vector<double> apply_isolation(std::span<const double> infected, std::span<const double> actions) {
  if (infected.size() != actions.size()) throw UsageError("apply_isolation: length mismatch");
  std::vector<double> out(infected.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = infected[i] * (1.0 - actions[i]);
  return out;
}

ad::TapeValue apply_isolation(const ad::TapeValue& infected, const ad::TapeValue& actions) {
  if (infected.size() != actions.size()) throw UsageError("apply_isolation: length mismatch");
  return ad::mul(infected, ad::one_minus(actions));
}

double VaccineProtocol::efficacy(std::uint8_t doses) const noexcept {
  if (doses >= 2) return second_dose_efficacy;
  if (doses == 1) return first_dose_efficacy;
  return 0.0;
}

void VaccineProtocol::validate() const {
  if (dose_gap < 1) throw DomainError("vaccine: dose_gap must be >= 1");
  for (double e : {first_dose_efficacy, second_dose_efficacy, second_dose_dropout})
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("vaccine: efficacies and dropout must be in [0, 1]");
  if (daily_supply < 0) throw DomainError("vaccine: daily_supply must be >= 0");
}

ExposureResult exposure_step(const Csr& graph, const Population& pop, const EpiParams& params,
                             std::span<const double> effective_infectious,
                             std::span<const double> vaccine_efficacy, double beta,
                             std::uint64_t seed, int step, unsigned threads) {
  const std::size_t n = pop.size();
  if (graph.rows() != n || effective_infectious.size() != n)
    throw UsageError("exposure_step: population, graph and infectious vector disagree");
  if (!vaccine_efficacy.empty() && vaccine_efficacy.size() != n)
    throw UsageError("exposure_step: vaccine efficacy vector has wrong length");
  ExposureResult r;
  r.exposed.assign(n, 0);
  std::vector<double> p(n, 0.0);
  std::vector<double> dp(n, 0.0);
  const auto age = pop.attribute(Attribute::age_band);
  const std::size_t chunks = parallel_chunks(n, threads);
  std::vector<std::size_t> counts(chunks, 0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end, unsigned chunk) {
    for (std::size_t i = begin; i < end; ++i) {
      if (pop.stage[i] != Stage::S) continue;
      double pressure = 0.0;
      for (std::uint64_t e = graph.row_ptr[i]; e < graph.row_ptr[i + 1]; ++e)
        pressure += graph.weight[e] * effective_infectious[graph.col[e]];
      if (pressure <= 0.0) continue;
      const double eff = vaccine_efficacy.empty() ? 0.0 : vaccine_efficacy[i];
      const double rate0 = params.susceptibility_of(age[i]) * (1.0 - eff) * params.dt * pressure /
                           static_cast<double>(graph.degree(i));
      const double q = std::exp(-beta * rate0);
      p[i] = 1.0 - q;
      dp[i] = q * rate0;
      RngStream rng(seed, static_cast<std::uint64_t>(step), pop.agent_id[i], Channel::exposure);
      if (rng.uniform() < p[i]) {
        r.exposed[i] = 1;
        ++counts[chunk];
      }
    }
  });
  r.count = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    r.expected += p[i];
    r.expected_dbeta += dp[i];
  }
  return r;
}

ProgressionCounts seirm_progress(Population& pop, const EpiParams& params, std::uint64_t seed,
                                 int step, unsigned threads) {
  const std::size_t n = pop.size();
  ProgressionCounts c;
  c.onset.assign(n, 0);
  const auto age = pop.attribute(Attribute::age_band);
  const std::size_t chunks = parallel_chunks(n, threads);
  std::vector<std::array<std::size_t, 3>> partial(chunks, {0, 0, 0});
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end, unsigned chunk) {
    auto& acc = partial[chunk];
    for (std::size_t i = begin; i < end; ++i) {
      const Stage s = pop.stage[i];
      if (s != Stage::E && s != Stage::I) continue;
      if (--pop.stage_timer[i] > 0) continue;
      if (s == Stage::E) {
        pop.stage[i] = Stage::I;
        pop.stage_timer[i] = params.infectious_period;
        c.onset[i] = 1;
        ++acc[0];
      } else {
        RngStream rng(seed, static_cast<std::uint64_t>(step), pop.agent_id[i], Channel::progression);
        const bool dies = rng.uniform() < params.mortality_of(age[i]);
        pop.stage[i] = dies ? Stage::M : Stage::R;
        pop.stage_timer[i] = 0;
        ++acc[dies ? 2 : 1];
      }
    }
  });
  for (const auto& a : partial) {
    c.new_infections += a[0];
    c.recoveries += a[1];
    c.deaths += a[2];
  }
  return c;
}

std::size_t apply_exposures(Population& pop, const EpiParams& params,
                            std::span<const std::uint8_t> exposed, std::vector<std::uint8_t>& onset) {
  std::size_t entered_i = 0;
  if (onset.size() != pop.size()) onset.assign(pop.size(), 0);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!exposed[i]) continue;
    if (params.latent_period > 0) {
      pop.stage[i] = Stage::E;
      pop.stage_timer[i] = params.latent_period;
    } else {
      pop.stage[i] = Stage::I;
      pop.stage_timer[i] = params.infectious_period;
      onset[i] = 1;
      ++entered_i;
    }
  }
  return entered_i;
}

VaccinationSchedule::VaccinationSchedule(const Population& pop, const VaccineProtocol& protocol,
                                         std::uint64_t seed)
    : protocol_(protocol) {
  protocol_.validate();
  const std::size_t n = pop.size();
  std::vector<std::pair<std::uint64_t, std::uint32_t>> prio(n);
  drops_out_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, 0, pop.agent_id[i], Channel::vaccine);
    prio[i] = {rng.next_u64(), static_cast<std::uint32_t>(i)};
    drops_out_[i] = rng.uniform() < protocol_.second_dose_dropout ? 1 : 0;
  }
  std::sort(prio.begin(), prio.end());
  first_queue_.resize(n);
  for (std::size_t k = 0; k < n; ++k) first_queue_[k] = prio[k].second;
}

std::size_t VaccinationSchedule::step(Population& pop, int step) {
  if (!protocol_.enabled || step < protocol_.start_step) return 0;
  auto supply = static_cast<std::size_t>(protocol_.daily_supply);
  std::size_t given = 0;
  while (supply > 0 && second_next_ < second_queue_.size()) {
    const auto i = second_queue_[second_next_];
    if (step - pop.last_dose_step[i] < protocol_.dose_gap) break;
    ++second_next_;
    pop.doses_received[i] = 2;
    pop.last_dose_step[i] = step;
    --supply;
    ++given;
    ++second_given_;
  }
  while (supply > 0 && first_next_ < first_queue_.size()) {
    const auto i = first_queue_[first_next_++];
    if (pop.doses_received[i] != 0) continue;
    pop.doses_received[i] = 1;
    pop.last_dose_step[i] = step;
    if (!drops_out_[i]) second_queue_.push_back(i);
    --supply;
    ++given;
    ++first_given_;
  }
  return given;
}

void TestProtocol::validate() const {
  for (double r : {sensitivity, specificity, screening_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("testing: rates must be in [0, 1]");
  if (result_delay < 0) throw DomainError("testing: result_delay must be >= 0");
}

void TestingState::resize(std::size_t n) {
  result_step.assign(n, -1);
  isolate_until.assign(n, -1);
}

TestCounts testing_step(const Population& pop, const TestProtocol& protocol,
                        const EpiParams& params, std::span<const std::uint8_t> onset,
                        TestingState& state, std::uint64_t seed, int step) {
  TestCounts c;
  if (!protocol.enabled) return c;
  const std::size_t n = pop.size();
  if (state.result_step.size() != n) state.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Stage s = pop.stage[i];
    RngStream rng(seed, static_cast<std::uint64_t>(step), pop.agent_id[i], Channel::test);
    if (s == Stage::I && onset[i]) {
      ++c.tests;
      if (rng.uniform() < protocol.sensitivity) {
        ++c.true_positives;
        state.result_step[i] = step + protocol.result_delay;
        state.isolate_until[i] = step + params.infectious_period;
      }
    } else if ((s == Stage::S || s == Stage::R) && protocol.screening_rate > 0.0) {
      if (rng.uniform() >= protocol.screening_rate) continue;
      ++c.tests;
      if (rng.uniform() < 1.0 - protocol.specificity) {
        ++c.false_positives;
        state.result_step[i] = step + protocol.result_delay;
        state.isolate_until[i] = step + protocol.result_delay + params.infectious_period - 1;
      }
    }
  }
  return c;
}

void StimulusSchedule::validate(int horizon) const {
  for (const auto& e : events) {
    if (e.adult_amount < 0.0 || e.per_child_amount < 0.0)
      throw DomainError("stimulus: amounts must be >= 0");
    if (e.step < 0 || (horizon > 0 && e.step >= horizon))
      throw DomainError("stimulus: event step " + std::to_string(e.step) + " outside horizon");
  }
}

double StimulusSchedule::month_payment(int step, int month_days) const {
  double total = 0.0;
  for (const auto& e : events)
    if (e.step <= step && e.step > step - month_days) total += e.adult_amount;
  return total;
}

std::vector<std::uint8_t> child_age_codes(const Population& pop, const StimulusSchedule& schedule) {
  const auto& vocab = pop.vocabulary(Attribute::age_band);
  std::vector<std::uint8_t> out(vocab.size(), 0);
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    const auto& label = vocab.label(c);
    if (!schedule.child_age_bands.empty()) {
      out[c] = std::find(schedule.child_age_bands.begin(), schedule.child_age_bands.end(), label) !=
                       schedule.child_age_bands.end()
                   ? 1
                   : 0;
      continue;
    }
    const auto t = label.find('t');
    if (t == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const int upper = std::stoi(label.substr(t + 1), &used);
      if (used == label.size() - t - 1 && upper < 18) out[c] = 1;
    } catch (const std::exception&) {
    }
  }
  return out;
}

std::vector<std::uint32_t> children_per_household(const Population& pop,
                                                  std::span<const std::uint8_t> child_codes) {
  std::uint32_t max_hh = 0;
  for (auto h : pop.household_id) max_hh = std::max(max_hh, h);
  std::vector<std::uint32_t> out(pop.size() == 0 ? 0 : max_hh + 1, 0);
  const auto age = pop.attribute(Attribute::age_band);
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (child_codes[age[i]]) ++out[pop.household_id[i]];
  return out;
}

std::vector<double> stimulus_step(const Population& pop, const StimulusSchedule& schedule, int step,
                                  std::span<const std::uint8_t> child_codes,
                                  std::span<const std::uint32_t> household_children) {
  std::vector<double> pay(pop.size(), 0.0);
  const auto age = pop.attribute(Attribute::age_band);
  for (const auto& e : schedule.events) {
    if (e.step != step) continue;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (child_codes[age[i]]) continue;
      if (!e.eligible_income_bands.empty() &&
          std::find(e.eligible_income_bands.begin(), e.eligible_income_bands.end(),
                    pop.label(Attribute::income_band, i)) == e.eligible_income_bands.end())
        continue;
      pay[i] += e.adult_amount + e.per_child_amount * household_children[pop.household_id[i]];
    }
  }
  return pay;
}

}  // namespace abmsim
