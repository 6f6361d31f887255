#pragma once

#include <optional>
#include <vector>

#include "mgopt/grid_model.hpp"

namespace mgopt {

/// Charging (u_plus >= 0) and discharging (u_minus <= 0) power of one step, kW.
struct ControlPair {
  double u_plus = 0.0;
  double u_minus = 0.0;

  bool operator==(const ControlPair&) const = default;
};

using ControlSequence = std::vector<ControlPair>;

inline constexpr double kDefaultFeasibilityTol = 1e-8;

/// x(n+1) = alpha x(n) + T (beta u+ + u-). Never clamps.
double step_dynamics(double x, const ControlPair& u, const BatteryParams& p, double T);

/// z(n) = w(n) + u+ + gamma u-.
double output_demand(double w, const ControlPair& u, const BatteryParams& p);

struct HorizonTrajectory {
  Profile soc;     ///< N+1 entries, soc[0] = x0
  Profile demand;  ///< N entries
};

HorizonTrajectory simulate_horizon(double x0, const ControlSequence& controls, const Profile& w,
                                   const BatteryParams& p, double T);

struct FeasibilityViolation {
  enum class Kind { kDischargeBound, kChargeBound, kCombinedBound, kSocLower, kSocUpper };
  Kind kind;
  int step;       ///< control index, or SoC index (1..N) for SoC violations
  double excess;  ///< amount by which the inequality is violated
};

struct FeasibilityReport {
  bool feasible = true;
  std::optional<FeasibilityViolation> first;
  explicit operator bool() const { return feasible; }
};

/// Checks the control bounds, the combined charge/discharge ratio and the SoC
/// box for x(1..N), each up to the additive tolerance `tol`. A zero power
/// bound forces the corresponding control to zero.
FeasibilityReport is_feasible(double x0, const ControlSequence& controls, const BatteryParams& p, double T,
                              double tol = kDefaultFeasibilityTol);

}  // namespace mgopt
