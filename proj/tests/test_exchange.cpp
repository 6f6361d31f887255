#include <random>

#include "doctest.h"
#include "mgopt/errors.hpp"
#include "mgopt/exchange.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace mgopt;

namespace {

GridTopology four_mg_topology() {
  GridTopology t;
  t.eta.resize(4, 4);
  t.eta << 1, .9, .9, .85, .9, 1, 0, .85, .9, 0, 1, 0, .85, .85, 0, 1;
  return t;
}

const std::vector<int> kFourMgSizes{50, 10, 10, 10};

MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

// Random feasible tensor: each line carries a random share in a random direction.
ExchangeTensor random_feasible(std::mt19937_64& rng, const GridTopology& topo, int N) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExchangeTensor t = ExchangeTensor::identity(topo.xi(), N);
  for (auto& d : t.delta) {
    for (int a = 0; a < topo.xi(); ++a) {
      for (int b = a + 1; b < topo.xi(); ++b) {
        if (!topo.connected(a, b)) continue;
        const int src = u(rng) < 0.5 ? a : b;
        const int dst = src == a ? b : a;
        d(src, dst) = 0.3 * u(rng);
      }
    }
    for (int r = 0; r < topo.xi(); ++r) d(r, r) = 0.0;
    for (int r = 0; r < topo.xi(); ++r) d(r, r) = 1.0 - d.row(r).sum();
  }
  return t;
}

}  // namespace

TEST_CASE("upper cost") {
  const auto topo = four_mg_topology();
  SUBCASE("perfect tracking costs nothing") {
    const VectorXd zeta = VectorXd::LinSpaced(3, 0.1, 0.5);
    const MatrixXd z = zeta.transpose().replicate(4, 1);
    CHECK(upper_cost(z, ExchangeTensor::identity(4, 3), topo, zeta, kFourMgSizes) == doctest::Approx(0.0));
  }
  SUBCASE("single microgrid decouples") {
    GridTopology one{MatrixXd::Identity(1, 1)};
    VectorXd zeta(2), z(2);
    zeta << 0.3, -0.1;
    z << 0.5, 0.2;
    CHECK(upper_cost(z.transpose(), ExchangeTensor::identity(1, 2), one, zeta, {7}) ==
          doctest::Approx(49.0 * (zeta - z).squaredNorm()));
  }
  SUBCASE("two microgrids by hand") {
    GridTopology two{(MatrixXd(2, 2) << 1, .9, .9, 1).finished()};
    ExchangeTensor d = ExchangeTensor::identity(2, 1);
    d.delta[0] << 0.7, 0.3, 0.0, 1.0;
    MatrixXd z(2, 1);
    z << 1.0, 0.2;
    VectorXd zeta = VectorXd::Constant(1, 0.5);
    // kappa = 1: 0.5*3 - 0.7*3*1.0 = -0.6 ; kappa = 2: 0.5*2 - (0.3*0.9*3*1.0 + 1.0*2*0.2) = -0.21
    CHECK(upper_cost(z, d, two, zeta, {3, 2}) == doctest::Approx(0.36 + 0.0441));
  }
}

TEST_CASE("apply exchange") {
  const auto topo = four_mg_topology();
  std::mt19937_64 rng(4);
  const MatrixXd z = random_matrix(rng, 4, 5, -0.5, 1.0);
  CHECK(apply_exchange(z, ExchangeTensor::identity(4, 5), topo, kFourMgSizes).isApprox(z, 1e-15));

  SUBCASE("swap between equal microgrids") {
    GridTopology two{MatrixXd::Ones(2, 2)};
    ExchangeTensor d = ExchangeTensor::identity(2, 1);
    d.delta[0] << 0, 1, 1, 0;
    MatrixXd zz(2, 1);
    zz << 0.4, -0.3;
    const MatrixXd out = apply_exchange(zz, d, two, {5, 5});
    CHECK(out(0, 0) == doctest::Approx(-0.3));
    CHECK(out(1, 0) == doctest::Approx(0.4));
  }
  SUBCASE("lossless lines conserve total demand") {
    GridTopology lossless{MatrixXd::Ones(4, 4)};
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = random_feasible(rng, lossless, 5);
      const MatrixXd out = apply_exchange(z, d, lossless, kFourMgSizes);
      VectorXd I(4);
      I << 50, 10, 10, 10;
      CHECK(((I.transpose() * out) - (I.transpose() * z)).norm() < 1e-12);
    }
  }
  SUBCASE("cost equals the decoupled cost after the exchange") {
    const VectorXd zeta = random_matrix(rng, 5, 1, 0, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = random_feasible(rng, topo, 5);
      const MatrixXd plus = apply_exchange(z, d, topo, kFourMgSizes);
      double decoupled = 0.0;
      for (int k = 0; k < 4; ++k)
        decoupled += kFourMgSizes[k] * kFourMgSizes[k] * (zeta - plus.row(k).transpose()).squaredNorm();
      CHECK(upper_cost(z, d, topo, zeta, kFourMgSizes) == doctest::Approx(decoupled).epsilon(1e-12));
    }
  }
}

TEST_CASE("exchange solve trivial cases") {
  GridTopology one{MatrixXd::Identity(1, 1)};
  const auto r1 = solve_exchange(MatrixXd::Constant(1, 3, 0.7), one, VectorXd::Constant(3, 0.1), {4});
  for (const auto& d : r1.delta.delta) CHECK(d(0, 0) == 1.0);

  const auto topo = four_mg_topology();
  const VectorXd zeta = VectorXd::LinSpaced(4, 0.2, -0.1);
  const auto r2 = solve_exchange(zeta.transpose().replicate(4, 1), topo, zeta, kFourMgSizes);
  CHECK(r2.cost == doctest::Approx(0.0));
  for (const auto& d : r2.delta.delta) CHECK(d == MatrixXd::Identity(4, 4));
}

TEST_CASE("two microgrids agree with a grid over the shares") {
  GridTopology two{MatrixXd::Ones(2, 2)};
  const double zeta = 0.3;
  MatrixXd z(2, 1);
  z << zeta + 1, zeta - 1;
  const auto r = solve_exchange(z, two, VectorXd::Constant(1, zeta), {1, 1});
  const double identity_cost = upper_cost(z, ExchangeTensor::identity(2, 1), two, VectorXd::Constant(1, zeta), {1, 1});
  CHECK(identity_cost == doctest::Approx(2.0));
  CHECK(r.cost < identity_cost);

  double best = 1e300;
  const int steps = 1000;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps; ++j) {
      const double d12 = double(i) / steps, d21 = double(j) / steps;
      if (d12 * d21 > 1e-6) continue;
      ExchangeTensor d = ExchangeTensor::identity(2, 1);
      d.delta[0] << 1 - d12, d12, d21, 1 - d21;
      best = std::min(best, upper_cost(z, d, two, VectorXd::Constant(1, zeta), {1, 1}));
    }
  }
  CHECK(r.cost <= best + 1e-9);
  CHECK(best - r.cost < 1e-3);
}

TEST_CASE("triangle agrees with a signed-flow grid search") {
  GridTopology tri{(MatrixXd(3, 3) << 1, .9, .8, .9, 1, .95, .8, .95, 1).finished()};
  const std::vector<int> sizes{20, 10, 5};
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd z = random_matrix(rng, 3, 1, -0.5, 1.5);
    const VectorXd zeta = random_matrix(rng, 1, 1, 0.0, 0.6);
    const auto r = solve_exchange(z, tri, zeta, sizes);

    // one signed share per line: positive sends from the lower to the higher index
    double best = 1e300;
    const int steps = 60;
    const int lines[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int a = -steps; a <= steps; ++a) {
      for (int b = -steps; b <= steps; ++b) {
        for (int c = -steps; c <= steps; ++c) {
          ExchangeTensor d = ExchangeTensor::identity(3, 1);
          const int s[3] = {a, b, c};
          for (int l = 0; l < 3; ++l) {
            const double t = double(std::abs(s[l])) / steps;
            if (s[l] > 0) d.delta[0](lines[l][0], lines[l][1]) = t;
            if (s[l] < 0) d.delta[0](lines[l][1], lines[l][0]) = t;
          }
          bool ok = true;
          for (int k = 0; k < 3; ++k) {
            const double out = d.delta[0].row(k).sum() - 1.0;
            if (out > 1.0 + 1e-12) ok = false;
            d.delta[0](k, k) = 1.0 - out;
          }
          if (ok) best = std::min(best, upper_cost(z, d, tri, zeta, sizes));
        }
      }
    }
    CAPTURE(trial);
    CHECK(r.cost <= best + 1e-9);
    CHECK(best - r.cost < 0.02 * (1.0 + best));
  }
}

TEST_CASE("solutions are feasible and never worse than identity") {
  const auto topo = four_mg_topology();
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const MatrixXd z = random_matrix(rng, 4, 6, -1.0, 2.0);
    const VectorXd zeta = random_matrix(rng, 6, 1, -0.2, 0.8);
    ExchangeConfig cfg;
    if (trial % 3 == 2) cfg.enumeration_limit = 0;  // local search path
    const auto r = solve_exchange(z, topo, zeta, kFourMgSizes, cfg);
    CHECK(feasibility_violation(r.delta, topo, cfg.eps) <= 1e-6);
    CHECK(r.cost <= upper_cost(z, ExchangeTensor::identity(4, 6), topo, zeta, kFourMgSizes) + 1e-8);
    CHECK(r.cost == doctest::Approx(upper_cost(z, r.delta, topo, zeta, kFourMgSizes)).epsilon(1e-12));
    for (const auto& d : r.delta.delta)
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) CHECK(d(a, b) * d(b, a) == 0.0);
  }
}

TEST_CASE("local search reaches the exhaustive optimum on the four-microgrid grid") {
  const auto topo = four_mg_topology();
  std::mt19937_64 rng(19);
  int matched = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    const MatrixXd z = random_matrix(rng, 4, 1, -1.0, 2.0);
    const VectorXd zeta = random_matrix(rng, 1, 1, -0.2, 0.8);
    ExchangeConfig local;
    local.enumeration_limit = 0;
    const double exact = solve_exchange(z, topo, zeta, kFourMgSizes).cost;
    const double approx = solve_exchange(z, topo, zeta, kFourMgSizes, local).cost;
    CHECK(approx >= exact - 1e-9);
    if (approx <= exact + 1e-8) ++matched;
  }
  CHECK(matched >= trials - 2);
}

TEST_CASE("horizon solve equals independent single-step solves") {
  const auto topo = four_mg_topology();
  std::mt19937_64 rng(2);
  const MatrixXd z = random_matrix(rng, 4, 6, -1.0, 2.0);
  const VectorXd zeta = random_matrix(rng, 6, 1, -0.2, 0.8);
  const auto full = solve_exchange(z, topo, zeta, kFourMgSizes);
  for (int n = 0; n < 6; ++n) {
    const auto single = solve_exchange(z.col(n), topo, zeta.segment(n, 1), kFourMgSizes);
    CHECK(single.delta.delta[0] == full.delta.delta[n]);
  }
}

TEST_CASE("exchange input checks") {
  const auto topo = four_mg_topology();
  CHECK_THROWS_AS(solve_exchange(MatrixXd::Zero(3, 2), topo, VectorXd::Zero(2), kFourMgSizes), DomainError);
  ExchangeConfig bad;
  bad.eps = 0.0;
  CHECK_THROWS_AS(solve_exchange(MatrixXd::Zero(4, 2), topo, VectorXd::Zero(2), kFourMgSizes, bad), DomainError);
}
