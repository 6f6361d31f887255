#include <cmath>
#include <random>

#include "doctest.h"
#include "mgopt/scenario.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace mgopt;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.scenario_id = "small";
  c.sizes = {3, 2, 2, 2};
  c.N = 3;
  c.synthetic.households = 9;
  c.synthetic.days = 2;
  c.start_step = 30;
  c.sim_length = 8;
  c.train_start = 0;
  c.train_steps = 40;
  c.admm.rho = 0.1;
  return c;
}

}  // namespace

TEST_CASE("stage cost") {
  GridTopology one{MatrixXd::Identity(1, 1)};
  CHECK(stage_cost(1.0, MatrixXd::Identity(1, 1), VectorXd::Zero(1), one, {2}) == 4.0);

  GridTopology four{RunConfig().eta};
  CHECK(stage_cost(0.7, MatrixXd::Identity(4, 4), VectorXd::Constant(4, 0.7), four, {50, 10, 10, 10}) == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd d = MatrixXd::Identity(4, 4);
    d(0, 0) = 0.6;
    d(0, 1) = 0.3;
    d(0, 3) = 0.1;
    d(2, 2) = 0.8;
    d(2, 0) = 0.2;
    VectorXd z(4);
    for (int k = 0; k < 4; ++k) z[k] = u(rng);
    const double zeta = u(rng);
    ExchangeTensor delta{{d}};
    const double expect = upper_cost(MatrixXd(z), delta, four,
                                     VectorXd::Constant(1, zeta), {50, 10, 10, 10});
    CHECK(stage_cost(zeta, d, z, four, {50, 10, 10, 10}) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(stage_cost(0.0, MatrixXd::Identity(3, 3), VectorXd::Zero(4), four, {1, 1, 1, 1}), DomainError);
}

TEST_CASE("disturbances") {
  std::mt19937_64 rng(1);
  const VectorXd z = VectorXd::LinSpaced(6, -0.4, 0.6);
  const VectorXd tiny = disturb(z, 15, rng);
  CHECK((tiny - z).lpNorm<Eigen::Infinity>() <= 1e-15 + 1e-16);
  for (int p = 0; p < 4; ++p) CHECK((disturb(z, p, rng) - z).lpNorm<Eigen::Infinity>() <= std::pow(10.0, -p));
  std::mt19937_64 a(7), b(7);
  CHECK(disturb(z, 1, a) == disturb(z, 1, b));
  CHECK_THROWS_AS(disturb(z, -1, rng), DomainError);

  // Same seed, different p: the same direction scaled by 10^-p.
  Scenario s = build_scenario(small_config());
  AdmmConfig cfg;
  cfg.rho = 0.1;
  AdmmLowerSolver inner(cfg, s.T);
  DisturbedSolver d1(inner, {1, 42}), d3(inner, {3, 42});
  MatrixXd w(3, 3);
  for (int i = 0; i < 3; ++i) w.row(i) = s.microgrids[0].households[i].net_window(30, 3).transpose();
  const VectorXd zeta = VectorXd::Constant(3, 0.3);
  const auto clean = inner.solve(s.microgrids[0], s.initial_soc[0], w, zeta).z_bar;
  d1.begin_step(5);
  d3.begin_step(5);
  const VectorXd e1 = d1.solve(s.microgrids[0], s.initial_soc[0], w, zeta).z_bar - clean;
  const VectorXd e3 = d3.solve(s.microgrids[0], s.initial_soc[0], w, zeta).z_bar - clean;
  CHECK((e1 - 100.0 * e3).norm() < 1e-9);
  CHECK(e1.norm() > 1e-3);
}

TEST_CASE("mpc without control") {
  RunConfig c = small_config();
  Scenario s = build_scenario(c);
  const auto log = run_mpc(s, mpc_options(c, SolverChoice::kNone));
  REQUIRE(log.steps.size() == 8);
  const MatrixXd net = stack_net_consumption(s.microgrids);
  for (const auto& st : log.steps) {
    double expect = 0.0;
    for (int k = 0; k < 4; ++k) {
      double wbar = 0.0;
      for (const auto& h : s.microgrids[k].households) wbar += h.net()[st.step] / s.microgrids[k].size();
      const double I = s.microgrids[k].size();
      expect += I * I * (reference_trajectory(net, st.step, c.N) - wbar) * (reference_trajectory(net, st.step, c.N) - wbar);
    }
    CHECK(st.stage_cost == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(log.transmissions() == 0);
  // Idle batteries only self-discharge.
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(log.u_plus[k].isZero());
    CHECK(log.u_minus[k].isZero());
    CHECK((log.soc[k].rightCols(8) - c.alpha * log.soc[k].leftCols(8)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("mpc with admm") {
  RunConfig c = small_config();
  Scenario s = build_scenario(c);
  const auto opt = mpc_options(c, SolverChoice::kAdmm);
  const auto log = run_mpc(s, opt);
  const auto none = run_mpc(s, mpc_options(c, SolverChoice::kNone));
  REQUIRE(log.steps.size() == 8);
  CHECK(log.total_cost() < none.total_cost());

  for (std::size_t k = 0; k < s.microgrids.size(); ++k) {
    const auto& mg = s.microgrids[k];
    for (int i = 0; i < mg.size(); ++i) {
      const auto& p = mg.households[i].battery();
      for (int t = 0; t < 8; ++t) {
        const ControlPair u{log.u_plus[k](i, t), log.u_minus[k](i, t)};
        CHECK(is_feasible(log.soc[k](i, t), {u}, p, s.T).feasible);
        CHECK(log.soc[k](i, t + 1) == doctest::Approx(step_dynamics(log.soc[k](i, t), u, p, s.T)).epsilon(1e-12));
      }
    }
  }
  for (const auto& st : log.steps) {
    // Perfect forecasts: the applied controls produce the planned demand.
    CHECK((st.realized - st.z_bar).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(st.realized_cost == doctest::Approx(st.stage_cost).epsilon(1e-6));
    CHECK(st.trace.iterations >= 1);
  }
  long per_step = 0;
  for (const auto& st : log.steps) per_step += st.trace.transmissions;
  CHECK(log.transmissions() == per_step);
  for (std::size_t k = 0; k < 4; ++k) CHECK(log.transmissions_per_mg[k] % (2 * s.microgrids[k].size()) == 0);

  const auto again = run_mpc(s, opt);
  CHECK(again.total_cost() == log.total_cost());
  for (std::size_t k = 0; k < 4; ++k) CHECK(again.soc[k] == log.soc[k]);

  const auto timing = timing_report(log);
  REQUIRE(timing.size() == 4);
  for (const auto& t : timing) {
    CHECK(t.solver == "admm");
    CHECK(t.calls == static_cast<long>(log.call_seconds[t.microgrid].size()));
    CHECK(t.mean > 0.0);
    CHECK(t.variance >= 0.0);
  }
}

TEST_CASE("mpc edge cases") {
  RunConfig c = small_config();
  Scenario s = build_scenario(c);
  auto opt = mpc_options(c, SolverChoice::kAdmm);
  opt.sim_length = 0;
  const auto empty = run_mpc(s, opt);
  CHECK(empty.steps.empty());
  CHECK(empty.total_cost() == 0.0);

  opt.sim_length = 8;
  opt.start_step = s.data_length() - 8;
  CHECK_THROWS_AS(run_mpc(s, opt), DataRangeError);

  opt = mpc_options(c, SolverChoice::kRbf);
  CHECK_THROWS_AS(run_mpc(s, opt), ConfigError);
  opt = mpc_options(c, SolverChoice::kNone);
  opt.disturbance = DisturbanceSpec{1, 1};
  CHECK_THROWS_AS(run_mpc(s, opt), DomainError);
  CHECK(solver_from_string("nn") == SolverChoice::kNn);
  CHECK_THROWS_AS(solver_from_string("sqp"), ConfigError);
}

TEST_CASE("sample collection and surrogate runs") {
  RunConfig c = small_config();
  Scenario s = build_scenario(c);
  auto opt = mpc_options(c, SolverChoice::kAdmm);
  opt.start_step = 0;
  opt.sim_length = 40;
  std::vector<SampleSet> sets;
  opt.samples = &sets;
  const auto train = run_mpc(s, opt);
  REQUIRE(sets.size() == 4);
  int iterations = 0;
  for (const auto& st : train.steps) iterations += st.trace.iterations;
  CHECK(static_cast<int>(sets[0].size()) == iterations);
  CHECK(sets[0].input_dim() == 2 * 3 + 3);

  // With one bidirectional iteration per step there is one sample per step.
  auto once = opt;
  once.bilevel.j_max = 1;
  std::vector<SampleSet> one;
  once.samples = &one;
  once.sim_length = 5;
  run_mpc(s, once);
  CHECK(one[0].size() == 5);

  auto rbf = std::make_shared<const RbfModel>(fit_rbf(sets[0], {}));
  auto ropt = mpc_options(c, SolverChoice::kRbf);
  ropt.rbf = {rbf};
  const auto log = run_mpc(s, ropt);
  REQUIRE(log.steps.size() == 8);
  for (const auto& st : log.steps) {
    CHECK(st.repaired);
    CHECK(st.trace.transmissions_per_mg[0] == 0);
    CHECK((st.realized - st.z_bar).lpNorm<Eigen::Infinity>() < 1e-8);
  }
  CHECK(log.solver_per_mg[0] == "rbf");
  CHECK(log.solver_per_mg[1] == "admm");
  CHECK(log.transmissions_per_mg[0] > 0);
  CHECK(log.repair_seconds[0].size() == 8);
  const auto admm = run_mpc(s, mpc_options(c, SolverChoice::kAdmm));
  CHECK(log.transmissions_per_mg[0] < admm.transmissions_per_mg[0]);

  auto wrong = std::make_shared<RbfModel>(*rbf);
  wrong->I = 5;
  ropt.rbf = {wrong};
  CHECK_THROWS_AS(run_mpc(s, ropt), ConfigError);
}

TEST_CASE("perturbation study") {
  RunConfig c = small_config();
  Scenario s = build_scenario(c);
  const auto study = perturbation_study(s, mpc_options(c, SolverChoice::kAdmm), {15, 0}, {1, 2});
  REQUIRE(study.rows.size() == 4);
  const double base = study.baseline.total_cost();
  CHECK(base == doctest::Approx(study.baseline.total_realized_cost()).epsilon(1e-6));
  for (const auto& row : study.rows) {
    CHECK(row.stage.size() == 8);
    CHECK(row.stage_realized.size() == 8);
    CHECK(row.open_loop.size() == 8);
    if (row.p == 15) CHECK(row.closed_loop == doctest::Approx(base).epsilon(1e-6));
    // Noise of order 1 kW shows up in the plans, not in what the batteries do.
    if (row.p == 0) CHECK(std::abs(row.closed_loop_realized - row.closed_loop) > 1e-3 * base);
  }
  CHECK(study.rows[2].closed_loop != study.rows[3].closed_loop);
}
