#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abmsim/core/csr.hpp"
#include "abmsim/core/tape.hpp"
#include "abmsim/popgen/population.hpp"

namespace abmsim {

/// Disease parameters resolved against a population's age-band vocabulary.
struct EpiParams {
  /// Effective contact rate per step; the last value is held past its end.
  std::vector<double> beta{0.0};
  /// Per age-band code; empty means 1 for everyone.
  std::vector<double> susceptibility;
  /// Per age-band code; empty means 0.
  std::vector<double> mortality;
  int latent_period = 5;
  int infectious_period = 7;
  double dt = 1.0;
  double initial_infected_fraction = 0.01;

  double beta_at(int t) const;
  double susceptibility_of(std::uint16_t age_code) const;
  double mortality_of(std::uint16_t age_code) const;
  /// Throws DomainError on a violated invariant.
  void validate() const;
};

/// beta = R0 / (infectious_period * dt). The kernel averages infectious
/// contacts over the degree, so one infectious agent among susceptible
/// neighbours produces R0 expected infections over its infectious period.
double beta_from_r0(double r0, int infectious_period, double dt);
double r0_from_beta(double beta, int infectious_period, double dt);

/// p = 1 - exp(-beta * s * dt * infected_sum / n). n = 0 gives 0 when
/// nothing is infectious and is a UsageError otherwise.
double infection_probability(double beta, double s, double n, double infected_sum, double dt);

/// Elementwise I_j * (1 - A_j).
std::vector<double> apply_isolation(std::span<const double> infected, std::span<const double> actions);
ad::TapeValue apply_isolation(const ad::TapeValue& infected, const ad::TapeValue& actions);

/// Per-agent efficacy in force from doses received.
struct VaccineProtocol {
  bool enabled = false;
  int dose_gap = 21;
  double first_dose_efficacy = 0.5;
  double second_dose_efficacy = 0.9;
  std::int64_t daily_supply = 0;
  double second_dose_dropout = 0.0;
  int start_step = 0;

  double efficacy(std::uint8_t doses) const noexcept;
  void validate() const;
};

struct ExposureResult {
  std::vector<std::uint8_t> exposed;
  std::size_t count = 0;
  /// Sum of infection probabilities over susceptible agents.
  double expected = 0.0;
  /// d(expected)/d(beta).
  double expected_dbeta = 0.0;
};

/// One synchronous exposure round: every susceptible agent i is exposed with
/// probability infection_probability(beta, S_a * (1 - efficacy_i), degree_i,
/// sum_j w_ij x_j, dt). Does not modify the population.
ExposureResult exposure_step(const Csr& graph, const Population& pop, const EpiParams& params,
                             std::span<const double> effective_infectious,
                             std::span<const double> vaccine_efficacy, double beta,
                             std::uint64_t seed, int step, unsigned threads = 1);

struct ProgressionCounts {
  std::size_t new_infections = 0;
  std::size_t recoveries = 0;
  std::size_t deaths = 0;
  std::vector<std::uint8_t> onset;  // 1 where E -> I happened this step
};

/// Advance E and I timers; E -> I when the timer runs out, I -> R or M
/// (with the age band's mortality) when the infectious period ends.
ProgressionCounts seirm_progress(Population& pop, const EpiParams& params, std::uint64_t seed,
                                 int step, unsigned threads = 1);

/// Move exposed agents into E (or straight into I when the latent period
/// is 0, marking them in `onset`). Returns how many entered I.
std::size_t apply_exposures(Population& pop, const EpiParams& params,
                            std::span<const std::uint8_t> exposed, std::vector<std::uint8_t>& onset);

/// Fixed-supply two-dose campaign. The queue is a pure function of the
/// seed and agent ids: due second doses first, then first doses in a
/// hashed priority order. Dropout is drawn at the first dose.
class VaccinationSchedule {
 public:
  VaccinationSchedule() = default;
  VaccinationSchedule(const Population& pop, const VaccineProtocol& protocol, std::uint64_t seed);

  /// Administer the doses of `step`. Returns the number given.
  std::size_t step(Population& pop, int step);
  std::size_t first_doses() const noexcept { return first_given_; }
  std::size_t second_doses() const noexcept { return second_given_; }

 private:
  VaccineProtocol protocol_;
  std::vector<std::uint32_t> first_queue_;
  std::size_t first_next_ = 0;
  std::vector<std::uint32_t> second_queue_;
  std::size_t second_next_ = 0;
  std::vector<std::uint8_t> drops_out_;
  std::size_t first_given_ = 0;
  std::size_t second_given_ = 0;
};

enum class TestKind : std::uint8_t { antigen, pcr };

struct TestProtocol {
  bool enabled = false;
  TestKind kind = TestKind::antigen;
  double sensitivity = 0.9;
  double specificity = 0.65;
  int result_delay = 1;
  /// Per-step probability that a non-infected (S or R) agent takes a test.
  double screening_rate = 0.0;

  void validate() const;
};

/// Pending and delivered test results per agent.
struct TestingState {
  std::vector<std::int32_t> result_step;    // -1 when no positive result pending
  std::vector<std::int32_t> isolate_until;  // last step of forced isolation
  void resize(std::size_t n);
  bool forced(std::size_t agent, int step) const noexcept {
    return result_step[agent] >= 0 && result_step[agent] <= step && step <= isolate_until[agent];
  }
};

struct TestCounts {
  std::size_t tests = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

/// Test agents whose symptoms began this step (stage I onset) and screen
/// non-infected agents. Positive results take effect `result_delay` steps
/// later and force isolation until the infectious period ends (or for one
/// infectious period after a false positive).
TestCounts testing_step(const Population& pop, const TestProtocol& protocol,
                        const EpiParams& params, std::span<const std::uint8_t> onset,
                        TestingState& state, std::uint64_t seed, int step);

struct StimulusEvent {
  int step = 0;
  double adult_amount = 0.0;
  double per_child_amount = 0.0;
  /// Income bands that qualify; empty means every band.
  std::vector<std::string> eligible_income_bands;
};

struct StimulusSchedule {
  std::vector<StimulusEvent> events;
  /// Age bands counted as children; empty derives them from "AtB" labels with B < 18.
  std::vector<std::string> child_age_bands;

  void validate(int horizon) const;
  /// Adult amount of events in the 30-step window ending at `step`.
  double month_payment(int step, int month_days = 30) const;
};

/// Per-age-code flag: band counts as children for stimulus purposes.
std::vector<std::uint8_t> child_age_codes(const Population& pop, const StimulusSchedule& schedule);

/// Children per household id.
std::vector<std::uint32_t> children_per_household(const Population& pop,
                                                  std::span<const std::uint8_t> child_codes);

/// Payments made at `step`: eligible adults get adult_amount plus
/// per_child_amount for each child in their household.
std::vector<double> stimulus_step(const Population& pop, const StimulusSchedule& schedule, int step,
                                  std::span<const std::uint8_t> child_codes,
                                  std::span<const std::uint32_t> household_children);

}  // namespace abmsim
