#pragma once

#include <vector>

#include <Eigen/Core>

#include "mgopt/battery.hpp"
#include "mgopt/grid_model.hpp"

namespace mgopt {

struct AdmmConfig {
  double rho = 1.0;
  int max_iters = 200;
  double primal_tol = 1e-4;  ///< on max_i |z_i - a_i|_inf, kW
  double cost_tol = 1e-6;    ///< on |g(a_bar^l) - g(a_bar^{l-1})|
  bool warm_start = true;    ///< reuse (a, lambda) across bidirectional iterations
};

void validate(const AdmmConfig& cfg);

/// Iterates of the consensus scheme; rows are households, columns horizon steps.
struct AdmmState {
  Eigen::MatrixXd z;
  Eigen::MatrixXd a;
  Eigen::MatrixXd lambda;
  int iter = 0;
};

struct LocalSolution {
  Profile z;
  ControlSequence controls;
};

/// Household step of the iteration: minimizes z'lambda + rho/2 |z - a|^2 over
/// the demand profiles the battery can realize from initial SoC x0.
LocalSolution local_z_update(const Profile& lambda_i, const Profile& a_i, double rho, const BatteryParams& battery,
                             double x0, const Profile& w_i, double T);

/// Exact minimizer of |a_bar - zeta|^2 - sum a_i'lambda_i + rho/2 sum |z_i - a_i|^2.
Eigen::MatrixXd global_a_update(const Eigen::MatrixXd& z, const Eigen::MatrixXd& lambda, double rho,
                                const Profile& zeta);

/// lambda + rho (z - a).
Eigen::MatrixXd dual_update(const Eigen::MatrixXd& lambda, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                            double rho);

struct LowerLevelResult {
  Profile z_bar;
  std::vector<ControlSequence> controls;  ///< one sequence per household
  int iterations = 0;
  long transmissions = 0;  ///< N-profiles exchanged with the central entity
  bool converged = false;
  std::vector<double> primal_residuals;  ///< |z - a|_inf per iteration
  std::vector<double> costs;             ///< g(a_bar) per iteration
  AdmmState state;                       ///< final iterates, usable as a warm start
};

/// Lower-level problem of one microgrid: minimizes |zeta_target - z_bar|^2 over
/// the households' feasible demand profiles by consensus ADMM.
///
/// `x0` holds each household's SoC, `w` its predicted net consumption (rows
/// households, N columns). The run stops once |z - a|_inf <= primal_tol and
/// g(a_bar) has moved by at most cost_tol in the last step and by at most
/// 10 cost_tol over the last 10 iterations.
/// Cold starts use a = w and lambda = 0; a `warm`
/// state of matching shape replaces that initialization. Household updates
/// run concurrently within an iteration. When max_iters is reached the
/// iterate with the lowest g(z_bar) is returned with converged = false.
LowerLevelResult solve_lower_level(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                                   const Profile& zeta_target, const AdmmConfig& cfg, double T,
                                   const AdmmState* warm = nullptr);

}  // namespace mgopt
