#include "mgopt/scenario.hpp"

#include <random>

#include <fmt/format.h>

#include "mgopt/errors.hpp"

namespace mgopt {

std::vector<HouseholdSeries> scenario_households(const RunConfig& c, std::vector<std::string>* warnings) {
  if (c.data_path.empty()) return generate_synthetic(c.synthetic);
  auto data = load_household_data(c.data_path);
  if (warnings) warnings->insert(warnings->end(), data.warnings.begin(), data.warnings.end());
  return std::move(data.households);
}

Scenario build_scenario(const RunConfig& c, const std::vector<HouseholdSeries>& data) {
  validate(c);
  std::size_t total = 0;
  for (int s : c.sizes) total += s;
  if (data.size() < total) {
    throw DataError(fmt::format("the microgrids need {} households, the data has {}", total, data.size()));
  }
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto draw = [&](double mean) { return mean * (1.0 + c.battery_spread * u(rng)); };

  Scenario s;
  s.id = c.scenario_id;
  s.T = c.T;
  s.N = c.N;
  s.topology.eta = c.eta;
  std::size_t next = 0;
  for (std::size_t k = 0; k < c.sizes.size(); ++k) {
    std::vector<Household> hh;
    Eigen::VectorXd x0(c.sizes[k]);
    for (int i = 0; i < c.sizes[k]; ++i) {
      const auto& d = data[next++];
      BatteryParams p;
      p.alpha = c.alpha;
      p.beta = c.beta;
      p.gamma = c.gamma;
      p.capacity = draw(c.capacity);
      p.u_max = draw(c.u_max);
      p.u_min = draw(c.u_min);
      x0[i] = c.soc_fraction * p.capacity;
      hh.emplace_back(d.id, p, d.load, d.generation);
    }
    s.microgrids.emplace_back(static_cast<int>(k), std::move(hh));
    s.initial_soc.push_back(x0);
  }
  const int need = std::max(c.start_step + c.sim_length, c.train_start + c.train_steps) + c.N - 1;
  if (s.data_length() < need) {
    throw DataError(fmt::format("the data covers {} steps but the configuration needs {}", s.data_length(), need));
  }
  return s;
}

Scenario build_scenario(const RunConfig& c) { return build_scenario(c, scenario_households(c)); }

MpcOptions mpc_options(const RunConfig& c, SolverChoice solver) {
  MpcOptions o;
  o.solver = solver;
  o.start_step = c.start_step;
  o.sim_length = c.sim_length;
  o.admm = c.admm;
  o.bilevel = c.bilevel;
  o.exchange = c.exchange;
  o.surrogate_microgrids = c.surrogate_microgrids;
  return o;
}

RunConfig committed_config() {
  RunConfig c;
  c.scenario_id = "four-mg";
  c.train_start = 0;
  c.train_steps = 672;
  c.start_step = 672;
  c.sim_length = 48;
  c.admm.rho = 0.1;
  c.bilevel.eps = 0.1;
  c.rbf_stride = 10;
  return c;
}

}  // namespace mgopt
