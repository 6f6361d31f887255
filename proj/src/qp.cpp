#include "mgopt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mgopt/errors.hpp"

namespace mgopt::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

Eigen::MatrixXd with_columns(Eigen::MatrixXd m, Eigen::Index n) {
  if (m.size() == 0) m.resize(m.rows(), n);
  return m;
}

}  // namespace

DenseQp::DenseQp(const Eigen::MatrixXd& G, Eigen::MatrixXd E, Eigen::MatrixXd C)
    : G_(G), E_(with_columns(std::move(E), G.rows())), C_(with_columns(std::move(C), G.rows())) {
  const auto n = G_.rows();
  if (G_.cols() != n || n == 0) throw DomainError("DenseQp: Hessian must be a non-empty square matrix");
  if (E_.cols() != n || C_.cols() != n) {
    throw DomainError(fmt::format("DenseQp: constraint matrices need {} columns", n));
  }
  llt_.compute(G_);
  if (llt_.info() != Eigen::Success) throw DomainError("DenseQp: Hessian is not positive definite");
  J0_ = llt_.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
  trace_g_ = G_.trace();
  trace_j_ = J0_.trace();

  const auto slots = n + E_.rows() + C_.rows() + 1;
  J_.resize(n, n);
  R_.resize(n, n);
  d_.resize(n);
  z_.resize(n);
  r_.resize(slots);
  u_.resize(slots);
  u_old_.resize(slots);
  x_old_.resize(n);
  s_.resize(C_.rows());
  np_.resize(n);
  active_.resize(slots);
  active_old_.resize(slots);
  state_.resize(C_.rows());
  allowed_.resize(C_.rows());
}

bool DenseQp::add_constraint(int& iq, double& r_norm) {
  const int n = static_cast<int>(G_.rows());
  // Givens rotations reduce d[iq+1..n-1] to zero, applied to J's columns.
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d_[j - 1];
    double ss = d_[j];
    const double h = std::hypot(cc, ss);
    if (std::abs(h) < kEps) continue;
    d_[j] = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d_[j - 1] = -h;
    } else {
      d_[j - 1] = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = J_(k, j - 1);
      const double t2 = J_(k, j);
      J_(k, j - 1) = t1 * cc + t2 * ss;
      J_(k, j) = xny * (t1 + J_(k, j - 1)) - t2;
    }
  }
  ++iq;
  for (int i = 0; i < iq; ++i) R_(i, iq - 1) = d_[i];
  if (std::abs(d_[iq - 1]) <= kEps * r_norm) return false;  // linearly dependent
  r_norm = std::max(r_norm, std::abs(d_[iq - 1]));
  return true;
}

void DenseQp::delete_constraint(int& iq, int constraint) {
  const int n = static_cast<int>(G_.rows());
  const int me = static_cast<int>(E_.rows());
  int qq = -1;
  for (int i = me; i < iq; ++i) {
    if (active_[i] == constraint) {
      qq = i;
      break;
    }
  }
  if (qq < 0) return;
  for (int i = qq; i < iq - 1; ++i) {
    active_[i] = active_[i + 1];
    u_[i] = u_[i + 1];
    R_.col(i) = R_.col(i + 1);
  }
  active_[iq - 1] = active_[iq];
  u_[iq - 1] = u_[iq];
  active_[iq] = 0;
  u_[iq] = 0.0;
  for (int j = 0; j < iq; ++j) R_(j, iq - 1) = 0.0;
  --iq;
  if (iq == 0) return;

  for (int j = qq; j < iq; ++j) {
    double cc = R_(j, j);
    double ss = R_(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (std::abs(h) < kEps) continue;
    cc /= h;
    ss /= h;
    R_(j + 1, j) = 0.0;
    if (cc < 0.0) {
      R_(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      R_(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      const double t1 = R_(j, k);
      const double t2 = R_(j + 1, k);
      R_(j, k) = t1 * cc + t2 * ss;
      R_(j + 1, k) = xny * (t1 + R_(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = J_(k, j);
      const double t2 = J_(k, j + 1);
      J_(k, j) = t1 * cc + t2 * ss;
      J_(k, j + 1) = xny * (J_(k, j) + t1) - t2;
    }
  }
}

Result DenseQp::solve(const Eigen::VectorXd& g, const Eigen::VectorXd& e, const Eigen::VectorXd& d) {
  const int n = static_cast<int>(G_.rows());
  const int me = static_cast<int>(E_.rows());
  const int mi = static_cast<int>(C_.rows());
  if (g.size() != n || e.size() != me || d.size() != mi) {
    throw DomainError("DenseQp::solve: right-hand side sizes do not match the problem");
  }

  Result res;
  res.y_eq = Eigen::VectorXd::Zero(me);
  res.y_in = Eigen::VectorXd::Zero(mi);

  J_ = J0_;
  R_.setZero();
  Eigen::VectorXd x = llt_.solve(-g);
  double f = 0.5 * g.dot(x);
  int iq = 0;
  double r_norm = 1.0;

  auto compute_direction = [&](int iq_now) {
    d_.noalias() = J_.transpose() * np_;
    z_.noalias() = J_.rightCols(n - iq_now) * d_.tail(n - iq_now);
    for (int i = iq_now - 1; i >= 0; --i) {
      double sum = d_[i];
      for (int j = i + 1; j < iq_now; ++j) sum -= R_(i, j) * r_[j];
      r_[i] = sum / R_(i, i);
    }
  };

  for (int i = 0; i < me; ++i) {
    np_ = E_.row(i).transpose();
    compute_direction(iq);
    double t2 = 0.0;
    const double znp = z_.dot(np_);
    if (z_.squaredNorm() > kEps) t2 = (e[i] - np_.dot(x)) / znp;
    x += t2 * z_;
    u_[iq] = t2;
    for (int k = 0; k < iq; ++k) u_[k] -= t2 * r_[k];
    f += 0.5 * t2 * t2 * znp;
    active_[iq] = -i - 1;
    if (!add_constraint(iq, r_norm)) {
      res.status = Status::kInfeasible;  // dependent equality constraints
      res.x = x;
      return res;
    }
  }

  for (int i = 0; i < mi; ++i) state_[i] = i;

  const int max_iter = 50 * (n + me + mi) + 100;
  const double feas_tol = std::max(1, mi) * kEps * trace_g_ * trace_j_ * 100.0;
  int ip = -1;

  auto finish = [&](Status status) {
    res.status = status;
    res.x = x;
    res.objective = f;
    for (int k = 0; k < iq; ++k) {
      if (active_[k] < 0) {
        res.y_eq[-active_[k] - 1] = u_[k];
      } else {
        res.y_in[active_[k]] = u_[k];
      }
    }
    return res;
  };

  for (;;) {
    // Step 1: look for violated constraints.
    if (++res.iterations > max_iter) return finish(Status::kIterationLimit);
    for (int i = me; i < iq; ++i) state_[active_[i]] = -1;
    double psi = 0.0;
    for (int i = 0; i < mi; ++i) {
      allowed_[i] = 1;
      s_[i] = C_.row(i).dot(x) - d[i];
      psi += std::min(0.0, s_[i]);
    }
    if (std::abs(psi) <= feas_tol) return finish(Status::kOptimal);
    for (int i = 0; i < iq; ++i) {
      u_old_[i] = u_[i];
      active_old_[i] = active_[i];
    }
    x_old_ = x;

    bool restart = false;
    while (!restart) {
      // Step 2: pick the most violated admissible constraint.
      double ss = 0.0;
      ip = -1;
      for (int i = 0; i < mi; ++i) {
        if (s_[i] < ss && state_[i] != -1 && allowed_[i]) {
          ss = s_[i];
          ip = i;
        }
      }
      if (ip < 0) return finish(Status::kOptimal);
      np_ = C_.row(ip).transpose();
      u_[iq] = 0.0;
      active_[iq] = ip;

      for (;;) {
        // Step 2a: primal and dual step directions.
        if (++res.iterations > max_iter) return finish(Status::kIterationLimit);
        compute_direction(iq);

        // Step 2b: step length.
        int l = -1;
        double t1 = kInf;
        for (int k = me; k < iq; ++k) {
          if (r_[k] > 0.0 && u_[k] / r_[k] < t1) {
            t1 = u_[k] / r_[k];
            l = active_[k];
          }
        }
        double t2 = kInf;
        if (z_.squaredNorm() > kEps) {
          t2 = -s_[ip] / z_.dot(np_);
          if (t2 < 0.0) t2 = kInf;
        }
        const double t = std::min(t1, t2);

        if (t >= kInf) return finish(Status::kInfeasible);

        if (t2 >= kInf) {
          // Dual step only: drop the blocking constraint.
          for (int k = 0; k < iq; ++k) u_[k] -= t * r_[k];
          u_[iq] += t;
          state_[l] = l;
          delete_constraint(iq, l);
          continue;
        }

        x += t * z_;
        f += t * z_.dot(np_) * (0.5 * t + u_[iq]);
        for (int k = 0; k < iq; ++k) u_[k] -= t * r_[k];
        u_[iq] += t;

        if (t2 <= t1) {
          // Full step: constraint ip becomes active.
          if (!add_constraint(iq, r_norm)) {
            allowed_[ip] = 0;
            delete_constraint(iq, ip);
            for (int i = 0; i < mi; ++i) state_[i] = i;
            for (int i = me; i < iq; ++i) {
              active_[i] = active_old_[i];
              u_[i] = u_old_[i];
              state_[active_[i]] = -1;
            }
            x = x_old_;
            break;  // back to step 2
          }
          state_[ip] = -1;
          restart = true;
          break;
        }

        // Partial step: drop constraint l and continue with ip.
        state_[l] = l;
        delete_constraint(iq, l);
        s_[ip] = np_.dot(x) - d[ip];
      }
    }
  }
}

ProxQp::ProxQp(const Eigen::MatrixXd& G, Eigen::MatrixXd E, Eigen::MatrixXd C, Options opts)
    : G_(G), opts_(opts) {
  const auto n = G.rows();
  double scale = n > 0 ? G.diagonal().mean() : 1.0;
  if (!(scale > 0.0)) scale = 1.0;
  eps_ = opts_.eps_rel * scale;
  Eigen::MatrixXd H = G;
  H.diagonal().array() += eps_;
  inner_ = DenseQp(H, std::move(E), std::move(C));
}

Result ProxQp::solve(const Eigen::VectorXd& g, const Eigen::VectorXd& e, const Eigen::VectorXd& d,
                     const Eigen::VectorXd& center) {
  const auto n = G_.rows();
  Eigen::VectorXd c = center.size() == n ? center : Eigen::VectorXd::Zero(n);
  Result res;
  int total = 0;
  for (int outer = 0; outer < opts_.max_outer; ++outer) {
    res = inner_.solve(g - eps_ * c, e, d);
    total += res.iterations;
    if (!res.ok()) break;
    const double step = (res.x - c).lpNorm<Eigen::Infinity>();
    c = res.x;
    if (step <= opts_.tol * (1.0 + res.x.lpNorm<Eigen::Infinity>())) break;
  }
  res.iterations = total;
  if (res.x.size() == n) res.objective = 0.5 * res.x.dot(G_ * res.x) + g.dot(res.x);
  return res;
}

double kkt_residual(const Eigen::MatrixXd& G, const Eigen::VectorXd& g, const Eigen::MatrixXd& E,
                    const Eigen::VectorXd& e, const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                    const Result& r) {
  Eigen::VectorXd grad = G * r.x + g;
  if (E.rows() > 0) grad -= E.transpose() * r.y_eq;
  if (C.rows() > 0) grad -= C.transpose() * r.y_in;
  double res = grad.lpNorm<Eigen::Infinity>();
  if (E.rows() > 0) res = std::max(res, (E * r.x - e).lpNorm<Eigen::Infinity>());
  if (C.rows() > 0) {
    const Eigen::VectorXd slack = C * r.x - d;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
      res = std::max(res, -slack[i]);
      res = std::max(res, -r.y_in[i]);
      res = std::max(res, std::abs(r.y_in[i] * slack[i]));
    }
  }
  return res;
}

}  // namespace mgopt::qp
