#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgopt/admm.hpp"
#include "mgopt/battery.hpp"
#include "mgopt/errors.hpp"
#include "mgopt/exchange.hpp"
#include "mgopt/grid_model.hpp"

namespace mgopt {

struct LowerResponse {
  Profile z_bar;
  std::optional<std::vector<ControlSequence>> controls;  ///< absent for surrogates
  long transmissions = 0;
};

/// Solver of one microgrid's lower-level problem. One instance serves one
/// microgrid; instances for different microgrids are called concurrently.
class LowerSolver {
 public:
  virtual ~LowerSolver() = default;
  virtual LowerResponse solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                              const Profile& target) = 0;
  /// Called before each bidirectional run; drops any state kept between calls.
  virtual void reset() {}
  /// Tells the solver which MPC step the following calls belong to.
  virtual void begin_step(int /*k*/) {}
  virtual std::string name() const = 0;
};

class AdmmLowerSolver : public LowerSolver {
 public:
  AdmmLowerSolver(AdmmConfig cfg, double T);
  LowerResponse solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                      const Profile& target) override;
  void reset() override { warm_.reset(); }
  std::string name() const override { return "admm"; }

  const LowerLevelResult& last() const { return last_; }

 private:
  AdmmConfig cfg_;
  double T_;
  std::optional<AdmmState> warm_;
  LowerLevelResult last_;
};

struct BilevelConfig {
  int j_max = 10;
  double eps = 1e-4;
};

void validate(const BilevelConfig& cfg);

/// Everything the bidirectional scheme needs at one MPC step. Row i of w[kappa]
/// is household i's predicted net consumption over the horizon.
struct BilevelInput {
  const std::vector<Microgrid>* microgrids = nullptr;
  const GridTopology* topology = nullptr;
  std::vector<Eigen::VectorXd> x0;
  std::vector<Eigen::MatrixXd> w;
  Profile zeta;

  std::vector<int> sizes() const;
};

struct BilevelTrace {
  std::vector<double> pre_costs;   ///< J(z^j, delta^{j-1})
  std::vector<double> post_costs;  ///< J(z^j, delta^j)
  int iterations = 0;
  int best_iteration = 0;  ///< 1-based index of the returned iterate
  long transmissions = 0;
  std::vector<long> transmissions_per_mg;
  std::vector<std::vector<double>> lower_seconds;  ///< wall time of every lower-level call, per microgrid
  std::vector<int> exchange_fallbacks;             ///< horizon steps where the exchange solve fell back to identity
};

/// One iterate of the scheme.
struct BilevelIterate {
  Eigen::MatrixXd z_bar;  ///< microgrids x N
  ExchangeTensor delta;
  std::vector<Profile> targets;  ///< lower-level references that produced z_bar
  std::vector<std::optional<std::vector<ControlSequence>>> controls;
  double pre_cost = 0.0;
  double post_cost = 0.0;
};

struct BilevelResult {
  BilevelIterate best;
  BilevelIterate last;
  BilevelTrace trace;
};

/// Reference of the modified lower-level problem: zeta + (z_bar - z_bar_plus).
Profile updated_reference(const Profile& zeta, const Profile& z_bar, const Profile& z_bar_plus);

/// Lower-level solve of every microgrid for the given targets followed by the
/// exchange solve. `previous_delta` is the exchange the pre-exchange cost is
/// measured with. Call statistics are appended to `trace`.
BilevelIterate bidirectional_step(const BilevelInput& in, const std::vector<Profile>& targets,
                                  const std::vector<LowerSolver*>& lower, const ExchangeTensor& previous_delta,
                                  const ExchangeConfig& xcfg, BilevelTrace& trace);

/// Targets for the next iteration derived from an iterate.
std::vector<Profile> next_targets(const BilevelInput& in, const BilevelIterate& it);

/// Thrown when a solver fails mid-run; carries the last completed iterate if any.
class BilevelError : public SolverError {
 public:
  BilevelError(const std::string& what, std::shared_ptr<const BilevelResult> partial)
      : SolverError(what), partial_(std::move(partial)) {}
  const BilevelResult* partial() const { return partial_.get(); }

 private:
  std::shared_ptr<const BilevelResult> partial_;
};

/// Alternates lower-level and exchange solves. The first iteration targets
/// zeta with identity exchange; later ones target the modified references.
/// The run stops at j_max iterations, or when the post-exchange cost improves
/// by at most eps over the previous iteration (tested from the second
/// iteration on), or right after the first iteration if its post-exchange
/// cost is already at most eps. The iterate with the lowest post-exchange
/// cost is returned as `best`.
BilevelResult run_bidirectional(const BilevelInput& in, const std::vector<LowerSolver*>& lower,
                                const BilevelConfig& cfg, const ExchangeConfig& xcfg = {});

}  // namespace mgopt
