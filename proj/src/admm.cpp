#include "mgopt/admm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <tbb/parallel_for.h>

#include "mgopt/errors.hpp"
#include "mgopt/qp.hpp"

namespace mgopt {

void validate(const AdmmConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw DomainError(fmt::format("ADMM penalty rho must be > 0, got {}", cfg.rho));
  if (cfg.max_iters < 1) throw DomainError("ADMM max_iters must be >= 1");
  if (!(cfg.primal_tol > 0.0) || !(cfg.cost_tol > 0.0)) throw DomainError("ADMM tolerances must be > 0");
}

namespace {

constexpr int kStagnationWindow = 10;

// Local problem of one household over the controls (u+, u-) per step, with
// the power bounds, the combined ratio bound and the SoC box as inequality
// constraints. Controls with a zero bound are not variables at all.
class HouseholdProblem {
 public:
  HouseholdProblem(const BatteryParams& p, double x0, int N, double T, double rho) : p_(p), N_(N) {
    if (!p.has_storage()) return;
    plus_.assign(N, -1);
    minus_.assign(N, -1);
    int nv = 0;
    for (int j = 0; j < N; ++j) {
      if (p.u_max > 0.0) plus_[j] = nv++;
      if (p.u_min < 0.0) minus_[j] = nv++;
    }
    S_ = Eigen::MatrixXd::Zero(N, nv);
    for (int j = 0; j < N; ++j) {
      if (plus_[j] >= 0) S_(j, plus_[j]) = 1.0;
      if (minus_[j] >= 0) S_(j, minus_[j]) = p.gamma;
    }

    const int rows = nv + N + 2 * N;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(rows, nv);
    d_ = Eigen::VectorXd::Zero(rows);
    int r = 0;
    for (int j = 0; j < N; ++j) {
      if (plus_[j] >= 0) C(r++, plus_[j]) = 1.0;     // u+ >= 0
      if (minus_[j] >= 0) C(r++, minus_[j]) = -1.0;  // u- <= 0
    }
    for (int j = 0; j < N; ++j, ++r) {
      if (plus_[j] >= 0 && minus_[j] >= 0) {
        C(r, plus_[j]) = -1.0 / p.u_max;
        C(r, minus_[j]) = -1.0 / p.u_min;
        d_[r] = -1.0;
      } else if (plus_[j] >= 0) {
        C(r, plus_[j]) = -1.0;
        d_[r] = -p.u_max;
      } else {
        C(r, minus_[j]) = 1.0;
        d_[r] = p.u_min;
      }
    }
    // x(n) = alpha^n x0 + T sum_{l<n} alpha^{n-1-l} (beta u+(l) + u-(l)), n = 1..N
    for (int n = 1; n <= N; ++n, r += 2) {
      const double free = std::pow(p.alpha, n) * x0;
      for (int l = 0; l < n; ++l) {
        const double c = T * std::pow(p.alpha, n - 1 - l);
        if (plus_[l] >= 0) {
          C(r, plus_[l]) = c * p.beta;
          C(r + 1, plus_[l]) = -c * p.beta;
        }
        if (minus_[l] >= 0) {
          C(r, minus_[l]) = c;
          C(r + 1, minus_[l]) = -c;
        }
      }
      d_[r] = -free;                       // x(n) >= 0
      d_[r + 1] = free - p.capacity;       // x(n) <= C
    }
    Eigen::MatrixXd G = rho * S_.transpose() * S_;
    qp_ = qp::ProxQp(G, Eigen::MatrixXd(0, nv), std::move(C));
    rho_ = rho;
    center_ = Eigen::VectorXd::Zero(nv);
  }

  bool has_controls() const { return S_.cols() > 0; }

  // Minimizes rho/2 |S u - target|^2, where target = a - lambda/rho - w.
  void solve(const Eigen::VectorXd& target, Eigen::VectorXd& offset, ControlSequence& controls) {
    controls.assign(N_, ControlPair{});
    if (!has_controls()) {
      offset = Eigen::VectorXd::Zero(N_);
      return;
    }
    const Eigen::VectorXd g = -rho_ * (S_.transpose() * target);
    auto res = qp_.solve(g, Eigen::VectorXd(0), d_, center_);
    if (!res.ok()) {
      throw SolverError(fmt::format("household sub-problem failed ({})",
                                    res.status == qp::Status::kInfeasible ? "infeasible" : "iteration limit"));
    }
    center_ = res.x;
    offset.resize(N_);
    for (int j = 0; j < N_; ++j) {
      if (plus_[j] >= 0) controls[j].u_plus = std::max(0.0, res.x[plus_[j]]);
      if (minus_[j] >= 0) controls[j].u_minus = std::min(0.0, res.x[minus_[j]]);
      offset[j] = controls[j].u_plus + p_.gamma * controls[j].u_minus;
    }
  }

 private:
  BatteryParams p_;
  int N_;
  std::vector<int> plus_, minus_;
  Eigen::MatrixXd S_;
  Eigen::VectorXd d_;
  qp::ProxQp qp_;
  double rho_ = 1.0;
  Eigen::VectorXd center_;
};

}  // namespace

LocalSolution local_z_update(const Profile& lambda_i, const Profile& a_i, double rho, const BatteryParams& battery,
                             double x0, const Profile& w_i, double T) {
  const auto N = w_i.size();
  if (lambda_i.size() != N || a_i.size() != N) throw DomainError("local_z_update: profile lengths differ");
  if (!(rho > 0.0)) throw DomainError("local_z_update: rho must be > 0");
  HouseholdProblem problem(battery, x0, static_cast<int>(N), T, rho);
  Eigen::VectorXd offset;
  LocalSolution out;
  problem.solve(a_i - lambda_i / rho - w_i, offset, out.controls);
  out.z = w_i + offset;
  return out;
}

Eigen::MatrixXd global_a_update(const Eigen::MatrixXd& z, const Eigen::MatrixXd& lambda, double rho,
                                const Profile& zeta) {
  if (z.rows() != lambda.rows() || z.cols() != lambda.cols() || z.cols() != zeta.size() || z.rows() == 0) {
    throw DomainError("global_a_update: shapes do not agree");
  }
  const double I = static_cast<double>(z.rows());
  // Stationarity: a_i = z_i + lambda_i/rho - 2/(I rho) (a_bar - zeta); averaging gives a_bar.
  const Eigen::RowVectorXd z_bar = z.colwise().mean();
  const Eigen::RowVectorXd l_bar = lambda.colwise().mean();
  const Eigen::RowVectorXd a_bar = (I * (rho * z_bar + l_bar) + 2.0 * zeta.transpose()) / (I * rho + 2.0);
  const Eigen::RowVectorXd shift = (2.0 / (I * rho)) * (a_bar - zeta.transpose());
  return (z + lambda / rho).rowwise() - shift;
}

Eigen::MatrixXd dual_update(const Eigen::MatrixXd& lambda, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                            double rho) {
  if (lambda.rows() != z.rows() || lambda.cols() != z.cols() || a.rows() != z.rows() || a.cols() != z.cols()) {
    throw DomainError("dual_update: shapes do not agree");
  }
  return lambda + rho * (z - a);
}

LowerLevelResult solve_lower_level(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                                   const Profile& zeta_target, const AdmmConfig& cfg, double T,
                                   const AdmmState* warm) {
  validate(cfg);
  const int I = mg.size();
  const auto N = static_cast<int>(zeta_target.size());
  if (x0.size() != I || w.rows() != I || w.cols() != N) {
    throw DomainError(fmt::format("solve_lower_level: expected {} households x {} steps", I, N));
  }

  std::vector<HouseholdProblem> problems;
  problems.reserve(I);
  bool any_control = false;
  for (int i = 0; i < I; ++i) {
    problems.emplace_back(mg.households[i].battery(), x0[i], N, T, cfg.rho);
    any_control = any_control || problems.back().has_controls();
  }

  LowerLevelResult out;
  AdmmState& st = out.state;
  st.z = w;
  if (warm && warm->a.rows() == I && warm->a.cols() == N && warm->lambda.rows() == I && warm->lambda.cols() == N) {
    st.a = warm->a;
    st.lambda = warm->lambda;
  } else {
    st.a = w;
    st.lambda = Eigen::MatrixXd::Zero(I, N);
  }
  out.controls.assign(I, ControlSequence(N));

  auto g_of = [&](const Eigen::RowVectorXd& avg) { return (avg - zeta_target.transpose()).squaredNorm(); };

  if (!any_control) {
    // Every feasible set is the singleton {w_i}.
    st.iter = 1;
    out.iterations = 1;
    out.transmissions = 2L * I;
    out.converged = true;
    out.z_bar = average_demand(w);
    out.primal_residuals.push_back(0.0);
    out.costs.push_back(g_of(out.z_bar.transpose()));
    st.a = w;
    return out;
  }

  std::vector<Eigen::VectorXd> offsets(I);
  double best_g = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_z;
  std::vector<ControlSequence> best_controls;
  double prev_cost = std::numeric_limits<double>::quiet_NaN();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    tbb::parallel_for(0, I, [&](int i) {
      const Eigen::VectorXd target = (st.a.row(i) - st.lambda.row(i) / cfg.rho - w.row(i)).transpose();
      problems[i].solve(target, offsets[i], out.controls[i]);
    });
    for (int i = 0; i < I; ++i) st.z.row(i) = w.row(i) + offsets[i].transpose();

    st.a = global_a_update(st.z, st.lambda, cfg.rho, zeta_target);
    st.lambda = dual_update(st.lambda, st.z, st.a, cfg.rho);
    st.iter = it;

    const double residual = (st.z - st.a).lpNorm<Eigen::Infinity>();
    const double cost = g_of(st.a.colwise().mean());
    out.primal_residuals.push_back(residual);
    out.costs.push_back(cost);
    out.iterations = it;

    const double g_primal = g_of(st.z.colwise().mean());
    if (g_primal < best_g) {
      best_g = g_primal;
      best_z = st.z;
      best_controls = out.controls;
    }
    if (residual <= cfg.primal_tol && (it == 1 || std::abs(cost - prev_cost) <= cfg.cost_tol)) {
      // Stagnation must also hold over the trailing window, not just the last step.
      const auto from = out.costs.end() - std::min<std::ptrdiff_t>(kStagnationWindow, out.costs.size());
      const auto [lo, hi] = std::minmax_element(from, out.costs.end());
      if (*hi - *lo <= kStagnationWindow * cfg.cost_tol) {
        out.converged = true;
        break;
      }
    }
    prev_cost = cost;
  }

  out.transmissions = 2L * I * out.iterations;
  if (out.converged) {
    out.z_bar = average_demand(st.z);
  } else {
    out.z_bar = average_demand(best_z);
    out.controls = std::move(best_controls);
  }
  return out;
}

}  // namespace mgopt
