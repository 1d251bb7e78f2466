#include "abmsim/engine/trajectory.hpp"

#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "abmsim/core/error.hpp"

namespace abmsim {

std::vector<double> Trajectory::series(double DailyAggregates::*field) const {
  std::vector<double> out(daily.size());
  for (std::size_t t = 0; t < daily.size(); ++t) out[t] = daily[t].*field;
  return out;
}

std::vector<double> Trajectory::monthly_series(double MonthlyAggregates::*field) const {
  std::vector<double> out(monthly.size());
  for (std::size_t m = 0; m < monthly.size(); ++m) out[m] = monthly[m].*field;
  return out;
}

std::vector<double> Trajectory::cumulative_infections() const {
  std::vector<double> out(daily.size());
  double acc = initial_infected;
  for (std::size_t t = 0; t < daily.size(); ++t) {
    acc += daily[t].new_exposures;
    out[t] = acc;
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << std::setprecision(10);
  return out;
}

}  // namespace

void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir,
                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / (stem + "_daily.csv"));
    out << kDailyCsvHeader << ",S,E,I,R,M\n";
    for (std::size_t t = 0; t < traj.daily.size(); ++t) {
      const auto& d = traj.daily[t];
      out << t << ',' << d.new_exposures << ',' << d.new_infections << ',' << d.active_infections
          << ',' << d.deaths << ',' << d.isolation_rate;
      for (double c : d.compartments) out << ',' << c;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / (stem + "_monthly.csv"));
    out << kMonthlyCsvHeader << '\n';
    for (std::size_t m = 0; m < traj.monthly.size(); ++m)
      out << m << ',' << traj.monthly[m].unemployment_rate << ','
          << traj.monthly[m].mean_willingness << '\n';
  }
  nlohmann::json meta{{"seed", traj.seed},         {"config_hash", traj.config_hash},
                      {"mode", traj.mode},         {"scale", traj.scale},
                      {"population", traj.population}, {"initial_infected", traj.initial_infected}, {"steps", traj.daily.size()},
                      {"months", traj.monthly.size()}, {"gamma0", traj.gamma0},
                      {"gamma1", traj.gamma1},     {"iur", traj.iur}};
  auto out = open_out(dir / (stem + ".meta.json"));
  out << meta.dump(2) << '\n';
}

}  // namespace abmsim
