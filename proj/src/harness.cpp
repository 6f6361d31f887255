#include "mgopt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mgopt/battery.hpp"
#include "mgopt/errors.hpp"

namespace mgopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<int> Scenario::sizes() const {
  std::vector<int> out;
  for (const auto& mg : microgrids) out.push_back(mg.size());
  return out;
}

int Scenario::data_length() const {
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& mg : microgrids)
    for (const auto& h : mg.households) len = std::min(len, h.length());
  return microgrids.empty() ? 0 : static_cast<int>(len);
}

void validate(const Scenario& s) {
  if (!(s.T > 0.0) || s.N < 1) throw DomainError("scenario: T must be > 0 and N >= 1");
  if (s.microgrids.empty()) throw DomainError("scenario: no microgrids");
  if (s.topology.xi() != static_cast<int>(s.microgrids.size())) {
    throw DomainError(fmt::format("scenario: topology is {}x{} for {} microgrids", s.topology.xi(), s.topology.xi(),
                                  s.microgrids.size()));
  }
  const auto report = validate_topology(s.topology);
  if (!report.ok()) throw DomainError("scenario: " + report.describe());
  if (s.initial_soc.size() != s.microgrids.size()) throw DomainError("scenario: initial SoC missing for a microgrid");
  for (std::size_t k = 0; k < s.microgrids.size(); ++k) {
    const auto& mg = s.microgrids[k];
    if (mg.size() < 1) throw DomainError(fmt::format("scenario: microgrid {} has no households", k));
    if (s.initial_soc[k].size() != mg.size()) {
      throw DomainError(fmt::format("scenario: microgrid {} has {} households but {} initial SoC values", k, mg.size(),
                                    s.initial_soc[k].size()));
    }
    for (int i = 0; i < mg.size(); ++i) {
      const double x = s.initial_soc[k][i];
      if (!(x >= 0.0 && x <= mg.households[i].battery().capacity)) {
        throw DomainError(fmt::format("scenario: initial SoC {} of household {} is outside [0, C]", x,
                                      mg.households[i].id()));
      }
    }
  }
}

double stage_cost(double zeta, const MatrixXd& delta, const VectorXd& z_bar, const GridTopology& topology,
                  const std::vector<int>& sizes) {
  const int xi = topology.xi();
  if (delta.rows() != xi || delta.cols() != xi || z_bar.size() != xi || static_cast<int>(sizes.size()) != xi) {
    throw DomainError("stage_cost: shapes disagree with the topology");
  }
  double cost = 0.0;
  for (int kappa = 0; kappa < xi; ++kappa) {
    double received = 0.0;
    for (int nu = 0; nu < xi; ++nu) received += delta(nu, kappa) * topology.eta(nu, kappa) * sizes[nu] * z_bar[nu];
    const double gap = zeta * sizes[kappa] - received;
    cost += gap * gap;
  }
  return cost;
}

std::string to_string(SolverChoice s) {
  switch (s) {
    case SolverChoice::kNone: return "none";
    case SolverChoice::kAdmm: return "admm";
    case SolverChoice::kRbf: return "rbf";
    case SolverChoice::kNn: return "nn";
  }
  return "?";
}

SolverChoice solver_from_string(const std::string& s) {
  if (s == "none") return SolverChoice::kNone;
  if (s == "admm") return SolverChoice::kAdmm;
  if (s == "rbf") return SolverChoice::kRbf;
  if (s == "nn") return SolverChoice::kNn;
  throw ConfigError(fmt::format("unknown solver '{}' (none, admm, rbf, nn)", s));
}

Profile disturb(const Profile& z_bar, int p, std::mt19937_64& rng) {
  if (p < 0) throw DomainError("disturb: p must be >= 0");
  const double scale = std::pow(10.0, -p);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Profile out = z_bar;
  for (int n = 0; n < out.size(); ++n) out[n] += scale * d(rng);
  return out;
}

LowerResponse DisturbedSolver::solve(const Microgrid& mg, const VectorXd& x0, const MatrixXd& w,
                                     const Profile& target) {
  LowerResponse r = inner_.solve(mg, x0, w, target);
  std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32),
                    static_cast<std::uint32_t>(mg.index), static_cast<std::uint32_t>(step_),
                    static_cast<std::uint32_t>(call_++)};
  std::mt19937_64 rng(seq);
  r.z_bar = disturb(r.z_bar, spec_.p, rng);
  return r;
}

void DisturbedSolver::reset() {
  call_ = 0;
  inner_.reset();
}

void DisturbedSolver::begin_step(int k) {
  step_ = k;
  call_ = 0;
  inner_.begin_step(k);
}

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

void validate(const MpcOptions& opt, const Scenario& s) {
  validate(opt.admm);
  validate(opt.bilevel);
  if (opt.start_step < 0 || opt.sim_length < 0) throw DomainError("mpc: start_step and sim_length must be >= 0");
  const int xi = static_cast<int>(s.microgrids.size());
  auto check_indices = [&](const std::vector<int>& v, const char* what) {
    for (int k : v)
      if (k < 0 || k >= xi) throw DomainError(fmt::format("mpc: {} lists microgrid {} of {}", what, k, xi));
  };
  check_indices(opt.surrogate_microgrids, "surrogate_microgrids");
  check_indices(opt.disturbed_microgrids, "disturbed_microgrids");
  if (opt.disturbance && opt.solver != SolverChoice::kAdmm) {
    throw DomainError("mpc: disturbances apply to the admm solver only");
  }
  if (opt.disturbance && opt.disturbance->p < 0) throw DomainError("mpc: disturbance p must be >= 0");
  for (int k : opt.surrogate_microgrids) {
    const int I = s.microgrids[k].size();
    if (opt.solver == SolverChoice::kRbf) {
      if (static_cast<int>(opt.rbf.size()) <= k || !opt.rbf[k]) throw ConfigError(fmt::format("no rbf model for microgrid {}", k));
      if (opt.rbf[k]->N != s.N || opt.rbf[k]->I != I) {
        throw ConfigError(fmt::format("rbf model for microgrid {} was fitted for N = {}, I = {}; the scenario has N = {}, I = {}",
                                      k, opt.rbf[k]->N, opt.rbf[k]->I, s.N, I));
      }
    }
    if (opt.solver == SolverChoice::kNn) {
      if (static_cast<int>(opt.nn.size()) <= k || !opt.nn[k]) throw ConfigError(fmt::format("no nn model for microgrid {}", k));
      if (opt.nn[k]->N != s.N || opt.nn[k]->I != I) {
        throw ConfigError(fmt::format("nn model for microgrid {} was fitted for N = {}, I = {}; the scenario has N = {}, I = {}",
                                      k, opt.nn[k]->N, opt.nn[k]->I, s.N, I));
      }
    }
  }
}

double MpcLog::total_cost() const {
  double sum = 0.0;
  for (const auto& st : steps) sum += st.stage_cost;
  return sum;
}

double MpcLog::total_realized_cost() const {
  double sum = 0.0;
  for (const auto& st : steps) sum += st.realized_cost;
  return sum;
}

long MpcLog::transmissions() const {
  long sum = 0;
  for (long t : transmissions_per_mg) sum += t;
  return sum;
}

MpcLog run_mpc(const Scenario& s, const MpcOptions& opt) {
  validate(s);
  validate(opt, s);
  const int xi = static_cast<int>(s.microgrids.size());
  const int end = opt.start_step + opt.sim_length;
  if (opt.sim_length > 0 && end + s.N - 1 > s.data_length()) {
    throw DataRangeError(fmt::format("mpc: steps {}..{} with horizon {} need {} data steps, {} available",
                                     opt.start_step, end - 1, s.N, end + s.N - 1, s.data_length()));
  }
  const auto sizes = s.sizes();
  const MatrixXd net = opt.sim_length > 0 ? stack_net_consumption(s.microgrids) : MatrixXd();

  const bool surrogate = opt.solver == SolverChoice::kRbf || opt.solver == SolverChoice::kNn;
  std::vector<std::unique_ptr<LowerSolver>> own;
  std::vector<LowerSolver*> lower(xi), repair(xi);
  std::vector<std::unique_ptr<AdmmLowerSolver>> repair_admm(xi);
  MpcLog log;
  log.scenario = s.id;
  log.solver = opt.solver;
  if (opt.samples) opt.samples->resize(xi);
  if (opt.solver != SolverChoice::kNone) {
    for (int k = 0; k < xi; ++k) {
      auto admm = std::make_unique<AdmmLowerSolver>(opt.admm, s.T);
      LowerSolver* use = admm.get();
      repair[k] = admm.get();
      own.push_back(std::move(admm));
      if (surrogate && contains(opt.surrogate_microgrids, k)) {
        if (opt.solver == SolverChoice::kRbf) {
          own.push_back(SurrogateLowerSolver::from(opt.rbf[k]));
        } else {
          own.push_back(SurrogateLowerSolver::from(opt.nn[k]));
        }
        use = own.back().get();
      }
      if (opt.disturbance && (opt.disturbed_microgrids.empty() || contains(opt.disturbed_microgrids, k))) {
        own.push_back(std::make_unique<DisturbedSolver>(*use, *opt.disturbance));
        use = own.back().get();
      }
      if (opt.samples) {
        own.push_back(std::make_unique<RecordingSolver>(*use, (*opt.samples)[k]));
        use = own.back().get();
      }
      lower[k] = use;
      log.solver_per_mg.push_back(use->name());
    }
  } else {
    log.solver_per_mg.assign(xi, "none");
  }

  log.transmissions_per_mg.assign(xi, 0);
  log.call_seconds.resize(xi);
  log.repair_seconds.resize(xi);
  std::vector<VectorXd> x = s.initial_soc;
  for (int k = 0; k < xi; ++k) {
    const int I = sizes[k];
    log.soc.push_back(MatrixXd::Zero(I, opt.sim_length + 1));
    log.soc.back().col(0) = x[k];
    log.u_plus.push_back(MatrixXd::Zero(I, opt.sim_length));
    log.u_minus.push_back(MatrixXd::Zero(I, opt.sim_length));
  }

  for (int step = opt.start_step; step < end; ++step) {
    const int t = step - opt.start_step;
    StepLog st;
    st.step = step;
    BilevelInput in;
    in.microgrids = &s.microgrids;
    in.topology = &s.topology;
    in.x0 = x;
    in.zeta = reference_profile(net, step, s.N);
    st.zeta = in.zeta[0];
    for (const auto& mg : s.microgrids) {
      MatrixXd w(mg.size(), s.N);
      for (int i = 0; i < mg.size(); ++i) w.row(i) = mg.households[i].net_window(step, s.N).transpose();
      in.w.push_back(std::move(w));
    }

    BilevelIterate plan;
    if (opt.solver == SolverChoice::kNone) {
      plan.z_bar.resize(xi, s.N);
      for (int k = 0; k < xi; ++k) plan.z_bar.row(k) = average_demand(in.w[k]).transpose();
      plan.delta = ExchangeTensor::identity(xi, s.N);
      plan.post_cost = upper_cost(plan.z_bar, plan.delta, s.topology, in.zeta, sizes);
      plan.controls.resize(xi);
    } else {
      for (auto* l : lower) l->begin_step(step);
      BilevelResult run;
      try {
        run = run_bidirectional(in, lower, opt.bilevel, opt.exchange);
      } catch (const BilevelError& e) {
        throw SolverError(fmt::format("MPC step {}: {}", step, e.what()));
      }
      st.trace = run.trace;
      for (int k = 0; k < xi; ++k) {
        log.transmissions_per_mg[k] += run.trace.transmissions_per_mg[k];
        const auto& secs = run.trace.lower_seconds[k];
        log.call_seconds[k].insert(log.call_seconds[k].end(), secs.begin(), secs.end());
      }
      plan = run.best;
      if (surrogate) {
        std::vector<LowerSolver*> fix = repair;
        for (int k : opt.surrogate_microgrids) {
          repair_admm[k] = std::make_unique<AdmmLowerSolver>(opt.admm, s.T);
          fix[k] = repair_admm[k].get();
        }
        BilevelTrace rt;
        plan = repair_with_admm(in, run, fix, opt.exchange, rt);
        st.repaired = true;
        for (int k = 0; k < xi; ++k) {
          log.transmissions_per_mg[k] += rt.transmissions_per_mg[k];
          log.repair_seconds[k].insert(log.repair_seconds[k].end(), rt.lower_seconds[k].begin(),
                                       rt.lower_seconds[k].end());
        }
      }
    }

    st.open_loop_cost = plan.post_cost;
    st.z_bar = plan.z_bar.col(0);
    st.delta = plan.delta.delta[0];
    st.stage_cost = stage_cost(st.zeta, st.delta, st.z_bar, s.topology, sizes);
    st.realized = VectorXd::Zero(xi);
    for (int k = 0; k < xi; ++k) {
      const auto& mg = s.microgrids[k];
      for (int i = 0; i < mg.size(); ++i) {
        const auto& h = mg.households[i];
        ControlPair u;
        if (plan.controls[k]) u = (*plan.controls[k])[i][0];
        const auto report = is_feasible(x[k][i], {u}, h.battery(), s.T);
        if (!report.feasible) {
          throw SolverError(fmt::format("MPC step {}: control for household {} of microgrid {} is infeasible", step,
                                        h.id(), k));
        }
        const double wk = in.w[k](i, 0);
        st.realized[k] += output_demand(wk, u, h.battery()) / mg.size();
        x[k][i] = std::clamp(step_dynamics(x[k][i], u, h.battery(), s.T), 0.0, h.battery().capacity);
        log.u_plus[k](i, t) = u.u_plus;
        log.u_minus[k](i, t) = u.u_minus;
      }
      log.soc[k].col(t + 1) = x[k];
    }
    st.realized_cost = stage_cost(st.zeta, st.delta, st.realized, s.topology, sizes);
    log.steps.push_back(std::move(st));
  }
  return log;
}

std::vector<TimingStats> timing_report(const MpcLog& log) {
  std::vector<TimingStats> out;
  for (std::size_t k = 0; k < log.call_seconds.size(); ++k) {
    TimingStats t;
    t.microgrid = static_cast<int>(k);
    t.solver = k < log.solver_per_mg.size() ? log.solver_per_mg[k] : "";
    const auto& v = log.call_seconds[k];
    t.calls = static_cast<long>(v.size());
    if (!v.empty()) {
      for (double d : v) t.mean += d;
      t.mean /= v.size();
      for (double d : v) t.variance += (d - t.mean) * (d - t.mean);
      t.variance /= v.size();
    }
    out.push_back(t);
  }
  return out;
}

PerturbationStudy perturbation_study(const Scenario& s, const MpcOptions& base, const std::vector<int>& p_values,
                                     const std::vector<std::uint64_t>& seeds) {
  MpcOptions opt = base;
  opt.solver = SolverChoice::kAdmm;
  opt.disturbance.reset();
  opt.samples = nullptr;
  PerturbationStudy study;
  study.baseline = run_mpc(s, opt);
  for (int p : p_values) {
    for (auto seed : seeds) {
      opt.disturbance = DisturbanceSpec{p, seed};
      const MpcLog log = run_mpc(s, opt);
      PerturbationRow row{p, seed, log.total_cost(), log.total_realized_cost(), {}, {}, {}};
      for (const auto& st : log.steps) {
        row.open_loop.push_back(st.open_loop_cost);
        row.stage.push_back(st.stage_cost);
        row.stage_realized.push_back(st.realized_cost);
      }
      study.rows.push_back(std::move(row));
    }
  }
  return study;
}

}  // namespace mgopt
