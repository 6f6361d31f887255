#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mgopt/grid_model.hpp"

namespace mgopt {

/// Exchange rates over a horizon. delta[n](nu, kappa) is the share of
/// microgrid nu's total demand sent to microgrid kappa at horizon step n.
struct ExchangeTensor {
  std::vector<Eigen::MatrixXd> delta;

  static ExchangeTensor identity(int xi, int N);
  int xi() const { return delta.empty() ? 0 : static_cast<int>(delta.front().rows()); }
  int horizon() const { return static_cast<int>(delta.size()); }
};

/// Largest violation of: entries in [0,1], unit row sums, zero off-diagonal
/// entries on missing lines, and delta(nu,kappa) delta(kappa,nu) <= eps.
double feasibility_violation(const ExchangeTensor& delta, const GridTopology& topology, double eps);

/// Upper-level cost; `z_bar` has one row per microgrid and N columns.
double upper_cost(const Eigen::MatrixXd& z_bar, const ExchangeTensor& delta, const GridTopology& topology,
                  const Profile& zeta, const std::vector<int>& sizes);

/// Average demand of each microgrid after the exchange is carried out.
Eigen::MatrixXd apply_exchange(const Eigen::MatrixXd& z_bar, const ExchangeTensor& delta,
                               const GridTopology& topology, const std::vector<int>& sizes);

struct ExchangeConfig {
  double eps = 1e-6;           ///< bound on delta(nu,kappa) delta(kappa,nu)
  int enumeration_limit = 10;  ///< max number of lines for exhaustive orientation search
  int multistarts = 3;         ///< local-search starts beyond the limit
  std::uint64_t seed = 0;
};

struct ExchangeResult {
  ExchangeTensor delta;
  std::vector<bool> fallback;  ///< per step: identity used after a solver failure
  double cost = 0.0;
};

/// Minimizes the upper-level cost independently for every horizon step.
///
/// Every line carries power in at most one direction, so each choice of
/// directions turns the step problem into a convex QP in the outgoing shares.
/// Up to `enumeration_limit` lines all 2^L direction patterns are solved and
/// the best is kept, which is the global optimum. Larger grids use a
/// single-flip local search over directions from `multistarts` starting
/// patterns. Shares below sqrt(eps) are dropped afterwards when that does not
/// raise the cost. Among results whose costs agree within 1e-10, the one
/// nearest to the identity is returned. Steps run concurrently.
ExchangeResult solve_exchange(const Eigen::MatrixXd& z_bar, const GridTopology& topology, const Profile& zeta,
                              const std::vector<int>& sizes, const ExchangeConfig& cfg = {});

}  // namespace mgopt
