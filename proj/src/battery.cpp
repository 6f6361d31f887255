#include "mgopt/battery.hpp"

#include <cmath>
#include <limits>

#include "mgopt/errors.hpp"

namespace mgopt {

double step_dynamics(double x, const ControlPair& u, const BatteryParams& p, double T) {
  return p.alpha * x + T * (p.beta * u.u_plus + u.u_minus);
}

double output_demand(double w, const ControlPair& u, const BatteryParams& p) {
  return w + u.u_plus + p.gamma * u.u_minus;
}

HorizonTrajectory simulate_horizon(double x0, const ControlSequence& controls, const Profile& w,
                                   const BatteryParams& p, double T) {
  if (static_cast<Eigen::Index>(controls.size()) != w.size()) {
    throw DomainError("simulate_horizon: controls and net consumption differ in length");
  }
  const auto n = static_cast<Eigen::Index>(controls.size());
  HorizonTrajectory out{Profile(n + 1), Profile(n)};
  out.soc[0] = x0;
  for (Eigen::Index j = 0; j < n; ++j) {
    out.soc[j + 1] = step_dynamics(out.soc[j], controls[j], p, T);
    out.demand[j] = output_demand(w[j], controls[j], p);
  }
  return out;
}

namespace {

// One ratio term of the combined constraint, with the zero-bound convention.
double ratio_term(double u, double bound, double tol) {
  if (bound == 0.0) return std::abs(u) <= tol ? 0.0 : std::numeric_limits<double>::infinity();
  return u / bound;
}

}  // namespace

FeasibilityReport is_feasible(double x0, const ControlSequence& controls, const BatteryParams& p, double T,
                              double tol) {
  using Kind = FeasibilityViolation::Kind;
  auto fail = [](Kind kind, int step, double excess) {
    return FeasibilityReport{false, FeasibilityViolation{kind, step, excess}};
  };

  double x = x0;
  for (std::size_t j = 0; j < controls.size(); ++j) {
    const auto& u = controls[j];
    const int step = static_cast<int>(j);
    if (u.u_minus < p.u_min - tol) return fail(Kind::kDischargeBound, step, p.u_min - u.u_minus);
    if (u.u_minus > tol) return fail(Kind::kDischargeBound, step, u.u_minus);
    if (u.u_plus < -tol) return fail(Kind::kChargeBound, step, -u.u_plus);
    if (u.u_plus > p.u_max + tol) return fail(Kind::kChargeBound, step, u.u_plus - p.u_max);
    const double ratio = ratio_term(u.u_minus, p.u_min, tol) + ratio_term(u.u_plus, p.u_max, tol);
    if (ratio > 1.0 + tol) return fail(Kind::kCombinedBound, step, ratio - 1.0);
    if (ratio < -tol) return fail(Kind::kCombinedBound, step, -ratio);

    x = step_dynamics(x, u, p, T);
    if (x < -tol) return fail(Kind::kSocLower, step + 1, -x);
    if (x > p.capacity + tol) return fail(Kind::kSocUpper, step + 1, x - p.capacity);
  }
  return {};
}

}  // namespace mgopt
