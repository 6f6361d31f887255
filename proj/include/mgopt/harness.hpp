#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgopt/bilevel.hpp"
#include "mgopt/surrogate.hpp"

namespace mgopt {

/// Coupled microgrids together with their full data series. Household series
/// are indexed by absolute step.
struct Scenario {
  std::string id;
  double T = 0.5;
  int N = 6;
  std::vector<Microgrid> microgrids;
  GridTopology topology;
  std::vector<Eigen::VectorXd> initial_soc;  ///< per microgrid, one entry per household

  std::vector<int> sizes() const;
  /// Number of steps covered by every household's data.
  int data_length() const;
};

/// Throws DomainError if sizes, SoC or topology are inconsistent.
void validate(const Scenario& s);

/// Sum over microgrids of (zeta I_kappa - sum_nu delta(nu,kappa) eta(nu,kappa) I_nu z_bar_nu)^2
/// at a single step.
double stage_cost(double zeta, const Eigen::MatrixXd& delta, const Eigen::VectorXd& z_bar, const GridTopology& topology,
                  const std::vector<int>& sizes);

enum class SolverChoice { kNone, kAdmm, kRbf, kNn };

std::string to_string(SolverChoice s);
/// Throws ConfigError for anything but none, admm, rbf, nn.
SolverChoice solver_from_string(const std::string& s);

struct DisturbanceSpec {
  int p = 0;  ///< noise amplitude 10^-p
  std::uint64_t seed = 0;
};

/// z_bar + 10^-p d with d drawn uniformly from (-1, 1) per entry.
Profile disturb(const Profile& z_bar, int p, std::mt19937_64& rng);

/// Wraps a lower-level solver and disturbs every profile it returns. The
/// noise of call c in MPC step k depends only on (seed, k, c), so runs with
/// different p see the same direction d.
class DisturbedSolver : public LowerSolver {
 public:
  DisturbedSolver(LowerSolver& inner, DisturbanceSpec spec) : inner_(inner), spec_(spec) {}
  LowerResponse solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                      const Profile& target) override;
  void reset() override;
  void begin_step(int k) override;
  std::string name() const override { return inner_.name() + "+noise"; }

 private:
  LowerSolver& inner_;
  DisturbanceSpec spec_;
  int step_ = 0;
  int call_ = 0;
};

struct MpcOptions {
  SolverChoice solver = SolverChoice::kAdmm;
  int start_step = 0;
  int sim_length = 48;
  AdmmConfig admm;
  BilevelConfig bilevel;
  ExchangeConfig exchange;
  /// Microgrids whose lower level is replaced for the rbf and nn choices.
  std::vector<int> surrogate_microgrids = {0};
  /// Models indexed by microgrid; required for every surrogate microgrid.
  std::vector<std::shared_ptr<const RbfModel>> rbf;
  std::vector<std::shared_ptr<const NnModel>> nn;
  /// Disturbs the lower-level output of the listed microgrids, all of them
  /// when the list is empty (admm choice only).
  std::optional<DisturbanceSpec> disturbance;
  std::vector<int> disturbed_microgrids;
  /// When set, every lower-level call is recorded here, one set per microgrid.
  std::vector<SampleSet>* samples = nullptr;
};

void validate(const MpcOptions& opt, const Scenario& s);

struct StepLog {
  int step = 0;  ///< absolute step k
  double zeta = 0.0;
  /// Stage cost of the applied plan (z_bar*(k), delta*(k)).
  double stage_cost = 0.0;
  /// Stage cost of the demand produced by the applied controls.
  double realized_cost = 0.0;
  /// Post-exchange cost of the returned open-loop plan over the horizon.
  double open_loop_cost = 0.0;
  Eigen::VectorXd z_bar;     ///< planned microgrid averages at step k
  Eigen::VectorXd realized;  ///< realized microgrid averages at step k
  Eigen::MatrixXd delta;     ///< applied exchange
  BilevelTrace trace;
  bool repaired = false;
};

struct MpcLog {
  std::string scenario;
  SolverChoice solver = SolverChoice::kAdmm;
  std::vector<std::string> solver_per_mg;
  std::vector<StepLog> steps;
  /// Per microgrid: households x (steps + 1) realized SoC, households x steps controls.
  std::vector<Eigen::MatrixXd> soc, u_plus, u_minus;
  std::vector<long> transmissions_per_mg;
  /// Wall time of every lower-level call made by the chosen solver, per microgrid.
  std::vector<std::vector<double>> call_seconds;
  /// Wall time of the repair pass's ADMM calls, per microgrid.
  std::vector<std::vector<double>> repair_seconds;

  /// Sum of the planned stage costs.
  double total_cost() const;
  /// Sum of the stage costs of the realized demand. Equal to total_cost() up
  /// to solver tolerance unless the lower-level outputs were disturbed.
  double total_realized_cost() const;
  long transmissions() const;
};

/// Closed loop: at each step solve the bidirectional problem on the forecast
/// window, apply the first control and exchange, and advance the batteries.
/// Throws DataRangeError if the data do not cover start_step + sim_length + N
/// steps and SolverError if a control to be applied is infeasible.
MpcLog run_mpc(const Scenario& s, const MpcOptions& opt);

struct TimingStats {
  int microgrid = 0;
  std::string solver;
  long calls = 0;
  double mean = 0.0;      ///< seconds
  double variance = 0.0;  ///< seconds^2
};

/// Per-call wall time of each microgrid's lower-level solver. Communication is
/// not modelled, so none is included.
std::vector<TimingStats> timing_report(const MpcLog& log);

/// Closed-loop costs are measured on the realized demand: the noise corrupts
/// what the central entity is told, not what the batteries do.
struct PerturbationRow {
  int p = 0;
  std::uint64_t seed = 0;
  double closed_loop = 0.0;           ///< summed stage costs of the disturbed plans
  double closed_loop_realized = 0.0;  ///< same, on the demand the batteries actually produce
  std::vector<double> open_loop;      ///< per step
  std::vector<double> stage;          ///< per step
  std::vector<double> stage_realized; ///< per step
};

struct PerturbationStudy {
  MpcLog baseline;
  std::vector<PerturbationRow> rows;
};

/// Disturbed ADMM runs for every (p, seed) pair next to an undisturbed baseline.
PerturbationStudy perturbation_study(const Scenario& s, const MpcOptions& base, const std::vector<int>& p_values,
                                     const std::vector<std::uint64_t>& seeds);

}  // namespace mgopt
