#include <algorithm>
#include <random>

#include "doctest.h"
#include "mgopt/errors.hpp"
#include "mgopt/grid_model.hpp"

using Eigen::MatrixXd;
using mgopt::GridTopology;

namespace {

MatrixXd four_mg_eta() {
  MatrixXd eta(4, 4);
  eta << 1.0, 0.9, 0.9, 0.85,  //
      0.9, 1.0, 0.0, 0.85,     //
      0.9, 0.0, 1.0, 0.0,      //
      0.85, 0.85, 0.0, 1.0;
  return eta;
}

// Direct evaluation of the averaging formula, written independently of the
// library: sum over the trailing window, then divide by the term count.
double reference_oracle(const MatrixXd& w, int n, int N) {
  double sum = 0.0;
  int terms = 0;
  for (int j = n; j >= 0 && j > n - N; --j) {
    for (int i = 0; i < w.rows(); ++i) {
      sum += w(i, j);
      ++terms;
    }
  }
  return sum / terms;
}

}  // namespace

TEST_CASE("reference trajectory of a constant is that constant") {
  MatrixXd w = MatrixXd::Constant(3, 10, 0.37);
  for (int n = 0; n < 10; ++n) CHECK(mgopt::reference_trajectory(w, n, 4) == doctest::Approx(0.37));
}

TEST_CASE("reference trajectory collapses to one step at n = 0") {
  MatrixXd w(2, 3);
  w << 1, 5, 5, 3, 5, 5;
  CHECK(mgopt::reference_trajectory(w, 0, 6) == doctest::Approx(2.0));
}

TEST_CASE("reference trajectory hand-computed example") {
  MatrixXd w(1, 2);
  w << 0.0, 4.0;
  CHECK(mgopt::reference_trajectory(w, 1, 2) == doctest::Approx(2.0));
}

TEST_CASE("reference trajectory matches the window oracle and is permutation invariant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-1.0, 2.0);
  MatrixXd w(7, 30);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) w(i, j) = ud(rng);
  MatrixXd permuted = w;
  permuted.row(0).swap(permuted.row(5));
  permuted.row(2).swap(permuted.row(6));
  for (int n = 0; n < 30; ++n) {
    CHECK(mgopt::reference_trajectory(w, n, 6) == doctest::Approx(reference_oracle(w, n, 6)).epsilon(1e-13));
    CHECK(mgopt::reference_trajectory(w, n, 6) == doctest::Approx(mgopt::reference_trajectory(permuted, n, 6)));
  }
}

TEST_CASE("reference trajectory outside the data range is an error") {
  MatrixXd w = MatrixXd::Zero(2, 5);
  CHECK_THROWS_AS(mgopt::reference_trajectory(w, 5, 3), mgopt::DataRangeError);
  CHECK_THROWS_AS(mgopt::reference_trajectory(w, -1, 3), mgopt::DataRangeError);
}

TEST_CASE("average demand") {
  SUBCASE("single profile is unchanged") {
    MatrixXd p(1, 3);
    p << 1, 2, 3;
    CHECK(mgopt::average_demand(p).isApprox(p.row(0).transpose()));
  }
  SUBCASE("symmetric pair") {
    MatrixXd p(2, 4);
    p.row(0).setZero();
    p.row(1).setConstant(2.0);
    CHECK(mgopt::average_demand(p).isApprox(Eigen::VectorXd::Ones(4)));
  }
  SUBCASE("random profiles match elementwise summation") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    MatrixXd p(3, 6);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 6; ++j) p(i, j) = nd(rng);
    auto avg = mgopt::average_demand(p);
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += p(i, j);
      CHECK(avg[j] == doctest::Approx(s / 3.0).epsilon(1e-14));
    }
  }
  SUBCASE("empty collection") { CHECK_THROWS_AS(mgopt::average_demand(MatrixXd(0, 6)), mgopt::DomainError); }
}

TEST_CASE("topology validation") {
  CHECK(mgopt::validate_topology(GridTopology{MatrixXd::Identity(5, 5)}).ok());
  auto four_mg = GridTopology{four_mg_eta()};
  CHECK(mgopt::validate_topology(four_mg).ok());
  CHECK(four_mg.eta.isApprox(four_mg.eta.transpose()));

  MatrixXd bad = four_mg_eta();
  bad(1, 2) = 0.9;
  bad(2, 1) = 0.8;
  auto report = mgopt::validate_topology(GridTopology{bad});
  REQUIRE_FALSE(report.ok());
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == mgopt::TopologyViolation::Kind::kAsymmetric);
  CHECK(report.violations[0].row == 1);
  CHECK(report.violations[0].col == 2);

  MatrixXd diag = MatrixXd::Identity(2, 2);
  diag(0, 0) = 0.5;
  diag(0, 1) = diag(1, 0) = 1.5;
  auto r2 = mgopt::validate_topology(GridTopology{diag});
  CHECK(r2.violations.size() == 3);
}

TEST_CASE("household derives net consumption and validates its series") {
  mgopt::Household h(3, {}, {1.0, 0.5, 0.2}, {0.0, 0.7, 0.2});
  CHECK(h.net()[0] == 1.0);
  CHECK(h.net()[1] == doctest::Approx(-0.2));
  CHECK(h.net()[2] == 0.0);
  CHECK_THROWS_AS(mgopt::Household(1, {}, {1.0}, {1.0, 2.0}), mgopt::DomainError);
  CHECK_THROWS_AS(mgopt::Household(1, {}, {-1.0}, {0.0}), mgopt::DomainError);
  CHECK_THROWS_AS(h.net_window(2, 2), mgopt::DataRangeError);
}

TEST_CASE("microgrid and parameter invariants") {
  mgopt::Household a(1, {}, {1.0}, {0.0});
  CHECK_THROWS_AS(mgopt::Microgrid(0, {}), mgopt::DomainError);
  CHECK_THROWS_AS(mgopt::Microgrid(0, {a, a}), mgopt::DomainError);
  mgopt::BatteryParams p;
  p.beta = 0.0;
  CHECK_THROWS_AS(mgopt::validate(p), mgopt::DomainError);
  p.beta = 1.0;
  p.u_min = 0.1;
  CHECK_THROWS_AS(mgopt::validate(p), mgopt::DomainError);
  mgopt::ScenarioConfig cfg;
  cfg.N = 1;
  CHECK_THROWS_AS(mgopt::validate(cfg), mgopt::DomainError);
  cfg.N = 2;
  cfg.T = 0.0;
  CHECK_THROWS_AS(mgopt::validate(cfg), mgopt::DomainError);
}
