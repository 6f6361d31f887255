#include "mgopt/exchange.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <tbb/parallel_for.h>

#include "mgopt/errors.hpp"
#include "mgopt/qp.hpp"

namespace mgopt {

ExchangeTensor ExchangeTensor::identity(int xi, int N) {
  ExchangeTensor t;
  t.delta.assign(N, Eigen::MatrixXd::Identity(xi, xi));
  return t;
}

namespace {

void check_shapes(const Eigen::MatrixXd& z_bar, const GridTopology& topology, const Profile& zeta,
                  const std::vector<int>& sizes) {
  const int xi = topology.xi();
  if (topology.eta.cols() != xi || z_bar.rows() != xi || static_cast<int>(sizes.size()) != xi ||
      z_bar.cols() != zeta.size()) {
    throw DomainError(fmt::format("exchange: expected {} microgrids x {} steps", xi, zeta.size()));
  }
  for (int s : sizes)
    if (s <= 0) throw DomainError("exchange: microgrid sizes must be positive");
}

void check_tensor(const ExchangeTensor& delta, int xi, int N) {
  if (delta.horizon() != N) throw DomainError("exchange: tensor horizon does not match the profiles");
  for (const auto& d : delta.delta)
    if (d.rows() != xi || d.cols() != xi) throw DomainError("exchange: tensor has the wrong size");
}

// Received power of every microgrid at one step, sum_nu delta(nu,kappa) eta(nu,kappa) P_nu.
Eigen::VectorXd received(const Eigen::MatrixXd& d, const Eigen::MatrixXd& eta, const Eigen::VectorXd& P) {
  return d.cwiseProduct(eta).transpose() * P;
}

struct Line {
  int a, b;  // a < b
  double eta;
};

struct StepProblem {
  Eigen::VectorXd P;       // I_nu z_bar_nu
  Eigen::VectorXd target;  // zeta I_kappa
  Eigen::VectorXd r0;      // target - P
  const std::vector<Line>& lines;
  const Eigen::MatrixXd& eta;
  int xi;

  double cost(const Eigen::MatrixXd& d) const { return (target - received(d, eta, P)).squaredNorm(); }
};

struct Candidate {
  Eigen::MatrixXd delta;
  double cost = std::numeric_limits<double>::infinity();
};

// Convex problem for a fixed direction per line: bit l of `mask` set means
// line l carries power from b to a.
Candidate solve_oriented(const StepProblem& sp, unsigned long mask, bool& failed) {
  const int L = static_cast<int>(sp.lines.size());
  std::vector<int> src(L), dst(L);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(sp.xi, L);
  for (int l = 0; l < L; ++l) {
    const auto& ln = sp.lines[l];
    const bool reverse = (mask >> l) & 1UL;
    src[l] = reverse ? ln.b : ln.a;
    dst[l] = reverse ? ln.a : ln.b;
    A(src[l], l) = sp.P[src[l]];
    A(dst[l], l) = -ln.eta * sp.P[src[l]];
  }
  // t >= 0 and, per sender, sum of outgoing shares <= 1
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(L + sp.xi, L);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(L + sp.xi);
  for (int l = 0; l < L; ++l) {
    C(l, l) = 1.0;
    C(L + src[l], l) = -1.0;
  }
  d.tail(sp.xi).setConstant(-1.0);

  Candidate out;
  out.delta = Eigen::MatrixXd::Identity(sp.xi, sp.xi);
  qp::ProxQp qp(2.0 * A.transpose() * A, Eigen::MatrixXd(0, L), C);
  const auto res = qp.solve(2.0 * A.transpose() * sp.r0, Eigen::VectorXd(0), d);
  if (!res.ok()) {
    failed = true;
    return out;
  }
  for (int l = 0; l < L; ++l) {
    const double t = std::clamp(res.x[l], 0.0, 1.0);
    out.delta(src[l], dst[l]) = t;
  }
  for (int nu = 0; nu < sp.xi; ++nu) {
    const double outgoing = out.delta.row(nu).sum() - 1.0;  // diagonal is still 1
    out.delta(nu, nu) = std::max(0.0, 1.0 - outgoing);
  }
  out.cost = sp.cost(out.delta);
  return out;
}

double identity_distance(const Eigen::MatrixXd& d) {
  return (d - Eigen::MatrixXd::Identity(d.rows(), d.cols())).norm();
}

bool better(const Candidate& c, const Candidate& best) {
  if (c.cost < best.cost - 1e-10) return true;
  if (c.cost > best.cost + 1e-10) return false;
  return identity_distance(c.delta) < identity_distance(best.delta);
}

// Drops shares below `floor` and rescales the affected rows to sum one.
Eigen::MatrixXd round_small(Eigen::MatrixXd d, double floor) {
  for (int r = 0; r < d.rows(); ++r) {
    bool touched = false;
    for (int c = 0; c < d.cols(); ++c) {
      if (d(r, c) > 0.0 && d(r, c) < floor) {
        d(r, c) = 0.0;
        touched = true;
      }
    }
    if (touched) {
      const double s = d.row(r).sum();
      if (s > 0.0) d.row(r) /= s;
      else d.row(r) = Eigen::RowVectorXd::Unit(d.cols(), r);
    }
  }
  return d;
}

}  // namespace

double feasibility_violation(const ExchangeTensor& delta, const GridTopology& topology, double eps) {
  const int xi = topology.xi();
  double worst = 0.0;
  for (const auto& d : delta.delta) {
    if (d.rows() != xi || d.cols() != xi) return std::numeric_limits<double>::infinity();
    for (int r = 0; r < xi; ++r) {
      worst = std::max(worst, std::abs(d.row(r).sum() - 1.0));
      for (int c = 0; c < xi; ++c) {
        worst = std::max({worst, -d(r, c), d(r, c) - 1.0});
        if (r != c && !topology.connected(r, c)) worst = std::max(worst, std::abs(d(r, c)));
        if (r < c) worst = std::max(worst, d(r, c) * d(c, r) - eps);
      }
    }
  }
  return worst;
}

double upper_cost(const Eigen::MatrixXd& z_bar, const ExchangeTensor& delta, const GridTopology& topology,
                  const Profile& zeta, const std::vector<int>& sizes) {
  check_shapes(z_bar, topology, zeta, sizes);
  check_tensor(delta, topology.xi(), static_cast<int>(zeta.size()));
  const Eigen::VectorXd I = Eigen::Map<const Eigen::VectorXi>(sizes.data(), sizes.size()).cast<double>();
  double cost = 0.0;
  for (int n = 0; n < zeta.size(); ++n) {
    const Eigen::VectorXd P = I.cwiseProduct(z_bar.col(n));
    cost += (zeta[n] * I - received(delta.delta[n], topology.eta, P)).squaredNorm();
  }
  return cost;
}

Eigen::MatrixXd apply_exchange(const Eigen::MatrixXd& z_bar, const ExchangeTensor& delta,
                               const GridTopology& topology, const std::vector<int>& sizes) {
  const int xi = topology.xi();
  if (z_bar.rows() != xi || static_cast<int>(sizes.size()) != xi) {
    throw DomainError("apply_exchange: one row and one size per microgrid expected");
  }
  check_tensor(delta, xi, static_cast<int>(z_bar.cols()));
  const Eigen::VectorXd I = Eigen::Map<const Eigen::VectorXi>(sizes.data(), sizes.size()).cast<double>();
  Eigen::MatrixXd out(xi, z_bar.cols());
  for (int n = 0; n < z_bar.cols(); ++n) {
    const Eigen::VectorXd P = I.cwiseProduct(z_bar.col(n));
    out.col(n) = received(delta.delta[n], topology.eta, P).cwiseQuotient(I);
  }
  return out;
}

ExchangeResult solve_exchange(const Eigen::MatrixXd& z_bar, const GridTopology& topology, const Profile& zeta,
                              const std::vector<int>& sizes, const ExchangeConfig& cfg) {
  check_shapes(z_bar, topology, zeta, sizes);
  if (!(cfg.eps > 0.0)) throw DomainError("solve_exchange: eps must be > 0");
  if (!z_bar.allFinite() || !zeta.allFinite()) throw DomainError("solve_exchange: non-finite demand");
  const int xi = topology.xi();
  const int N = static_cast<int>(zeta.size());
  const Eigen::VectorXd I = Eigen::Map<const Eigen::VectorXi>(sizes.data(), sizes.size()).cast<double>();

  std::vector<Line> lines;
  for (int a = 0; a < xi; ++a)
    for (int b = a + 1; b < xi; ++b)
      if (topology.connected(a, b)) lines.push_back({a, b, topology.eta(a, b)});
  const int L = static_cast<int>(lines.size());
  if (L > 62) throw DomainError("solve_exchange: too many lines");

  ExchangeResult out;
  out.delta = ExchangeTensor::identity(xi, N);
  std::vector<char> fallback(N, 0);
  std::vector<double> costs(N, 0.0);

  tbb::parallel_for(0, N, [&](int n) {
    const Eigen::VectorXd P = I.cwiseProduct(z_bar.col(n));
    const StepProblem sp{P, zeta[n] * I, zeta[n] * I - P, lines, topology.eta, xi};

    Candidate best{Eigen::MatrixXd::Identity(xi, xi), sp.r0.squaredNorm()};
    const double identity_cost = best.cost;
    bool failed = false;
    auto consider = [&](unsigned long mask) {
      Candidate c = solve_oriented(sp, mask, failed);
      if (better(c, best)) best = std::move(c);
      return c.cost;
    };

    if (L > 0 && L <= cfg.enumeration_limit) {
      for (unsigned long mask = 0; mask < (1UL << L); ++mask) consider(mask);
    } else if (L > 0) {
      // First start sends power from the microgrid further above the reference.
      std::vector<unsigned long> starts;
      unsigned long guided = 0;
      for (int l = 0; l < L; ++l)
        if (sp.r0[lines[l].b] < sp.r0[lines[l].a]) guided |= 1UL << l;
      starts.push_back(guided);
      std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(n + 1)));
      while (static_cast<int>(starts.size()) < std::max(1, cfg.multistarts)) starts.push_back(rng() & ((1UL << L) - 1));
      for (unsigned long mask : starts) {
        double current = consider(mask);
        for (bool improved = true; improved;) {
          improved = false;
          for (int l = 0; l < L; ++l) {
            const unsigned long flipped = mask ^ (1UL << l);
            const double c = consider(flipped);
            if (c < current - 1e-12) {
              current = c;
              mask = flipped;
              improved = true;
            }
          }
        }
      }
    }

    Eigen::MatrixXd rounded = round_small(best.delta, std::sqrt(cfg.eps));
    const double rounded_cost = sp.cost(rounded);
    if (rounded_cost <= best.cost + 1e-12) best = Candidate{std::move(rounded), rounded_cost};
    if (best.cost > identity_cost) best = Candidate{Eigen::MatrixXd::Identity(xi, xi), identity_cost};

    fallback[n] = failed ? 1 : 0;
    costs[n] = best.cost;
    out.delta.delta[n] = std::move(best.delta);
  });

  out.fallback.assign(fallback.begin(), fallback.end());
  for (double c : costs) out.cost += c;
  return out;
}

}  // namespace mgopt
