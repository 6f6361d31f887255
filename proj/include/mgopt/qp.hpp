#pragma once

#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace mgopt::qp {

enum class Status { kOptimal, kInfeasible, kIterationLimit };

struct Result {
  Status status = Status::kOptimal;
  Eigen::VectorXd x;
  /// Multipliers such that G x + g = E' y_eq + C' y_in with y_in >= 0.
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  double objective = 0.0;
  int iterations = 0;

  bool ok() const { return status == Status::kOptimal; }
};

/// Strictly convex dense QP
///
///   minimize   1/2 x'Gx + g'x
///   subject to E x  = e
///              C x >= d
///
/// solved with the dual active-set method of Goldfarb and Idnani. The Hessian
/// and the constraint matrices are fixed at construction so that the Cholesky
/// factor can be reused across many right-hand sides; `solve` is cheap for
/// the small problems this library produces (tens of variables).
class DenseQp {
 public:
  DenseQp() = default;
  /// Throws DomainError if G is not symmetric positive definite or the
  /// constraint matrices do not match its size.
  DenseQp(const Eigen::MatrixXd& G, Eigen::MatrixXd E, Eigen::MatrixXd C);

  Result solve(const Eigen::VectorXd& g, const Eigen::VectorXd& e, const Eigen::VectorXd& d);

  int num_variables() const { return static_cast<int>(G_.rows()); }
  int num_equalities() const { return static_cast<int>(E_.rows()); }
  int num_inequalities() const { return static_cast<int>(C_.rows()); }

 private:
  bool add_constraint(int& iq, double& r_norm);
  void delete_constraint(int& iq, int constraint);

  Eigen::MatrixXd G_;
  Eigen::MatrixXd E_;
  Eigen::MatrixXd C_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd J0_;  // L^{-T}
  double trace_g_ = 0.0;
  double trace_j_ = 0.0;

  // workspace
  Eigen::MatrixXd J_, R_;
  Eigen::VectorXd d_, z_, r_, u_, u_old_, x_old_, s_, np_;
  std::vector<int> active_, active_old_;
  std::vector<int> state_;  // -1: active, otherwise inactive
  std::vector<char> allowed_;
};

/// Convex QP with a positive semidefinite Hessian, solved by proximal-point
/// iterations  x+ = argmin f(x) + eps/2 |x - c|^2  over the feasible set,
/// each of which is a strictly convex DenseQp. Among multiple minimizers the
/// iteration settles near the initial center.
class ProxQp {
 public:
  struct Options {
    double eps_rel = 1e-4;   ///< proximal weight relative to the mean diagonal of G
    double tol = 1e-12;      ///< stop when the step is below tol * (1 + |x|_inf)
    int max_outer = 60;
  };

  ProxQp() = default;
  ProxQp(const Eigen::MatrixXd& G, Eigen::MatrixXd E, Eigen::MatrixXd C, Options opts);
  ProxQp(const Eigen::MatrixXd& G, Eigen::MatrixXd E, Eigen::MatrixXd C) : ProxQp(G, E, C, Options{}) {}

  /// Solves from the proximal center `center` (zero if empty).
  Result solve(const Eigen::VectorXd& g, const Eigen::VectorXd& e, const Eigen::VectorXd& d,
               const Eigen::VectorXd& center = {});

  double proximal_weight() const { return eps_; }

 private:
  Eigen::MatrixXd G_;
  DenseQp inner_;
  Options opts_;
  double eps_ = 0.0;
};

/// Max-norm KKT residual of `result` for the problem (G, g, E, e, C, d):
/// stationarity, primal feasibility, dual sign and complementarity.
double kkt_residual(const Eigen::MatrixXd& G, const Eigen::VectorXd& g, const Eigen::MatrixXd& E,
                    const Eigen::VectorXd& e, const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                    const Result& result);

}  // namespace mgopt::qp
