#include "mgopt/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "mgopt/errors.hpp"

namespace mgopt {

void validate(const BatteryParams& p) {
  auto in_unit = [](double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; };
  if (!in_unit(p.alpha) || !in_unit(p.beta) || !in_unit(p.gamma)) {
    throw DomainError(fmt::format("battery efficiencies must lie in (0,1]: alpha={} beta={} gamma={}",
                                  p.alpha, p.beta, p.gamma));
  }
  if (!(p.capacity >= 0.0) || !std::isfinite(p.capacity)) {
    throw DomainError(fmt::format("battery capacity must be >= 0, got {}", p.capacity));
  }
  if (!(p.u_min <= 0.0) || !(p.u_max >= 0.0) || !std::isfinite(p.u_min) || !std::isfinite(p.u_max)) {
    throw DomainError(fmt::format("battery power bounds must satisfy u_min <= 0 <= u_max, got [{}, {}]",
                                  p.u_min, p.u_max));
  }
}

Household::Household(int id, BatteryParams battery, std::vector<double> load, std::vector<double> generation)
    : id_(id), battery_(battery), load_(std::move(load)), generation_(std::move(generation)) {
  validate(battery_);
  if (load_.size() != generation_.size()) {
    throw DomainError(fmt::format("household {}: load has {} samples but generation has {}", id_, load_.size(),
                                  generation_.size()));
  }
  net_.resize(load_.size());
  for (std::size_t n = 0; n < load_.size(); ++n) {
    if (!(load_[n] >= 0.0) || !(generation_[n] >= 0.0)) {
      throw DomainError(fmt::format("household {}: negative or non-finite load/generation at step {}", id_, n));
    }
    net_[n] = load_[n] - generation_[n];
  }
}

Profile Household::net_window(std::size_t offset, std::size_t length) const {
  if (offset + length > net_.size()) {
    throw DataRangeError(fmt::format("household {}: window [{}, {}) exceeds {} samples", id_, offset,
                                     offset + length, net_.size()));
  }
  return Eigen::Map<const Profile>(net_.data() + offset, static_cast<Eigen::Index>(length));
}

Microgrid::Microgrid(int index_, std::vector<Household> households_)
    : index(index_), households(std::move(households_)) {
  if (households.empty()) throw DomainError(fmt::format("microgrid {} has no households", index));
  std::set<int> ids;
  for (const auto& h : households) {
    if (!ids.insert(h.id()).second) {
      throw DomainError(fmt::format("microgrid {}: duplicate household id {}", index, h.id()));
    }
  }
}

void validate(const ScenarioConfig& cfg) {
  if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw DomainError(fmt::format("step length T must be > 0, got {}", cfg.T));
  if (cfg.N < 2) throw DomainError(fmt::format("prediction horizon N must be >= 2, got {}", cfg.N));
  if (cfg.sim_length < 0) throw DomainError(fmt::format("sim_length must be >= 0, got {}", cfg.sim_length));
}

std::string TopologyReport::describe() const {
  std::string out;
  for (const auto& v : violations) {
    const char* what = "";
    switch (v.kind) {
      case TopologyViolation::Kind::kNotSquare: what = "matrix not square"; break;
      case TopologyViolation::Kind::kOutOfRange: what = "entry outside [0,1]"; break;
      case TopologyViolation::Kind::kDiagonal: what = "diagonal entry != 1"; break;
      case TopologyViolation::Kind::kAsymmetric: what = "asymmetric pair"; break;
    }
    out += fmt::format("{}({},{}) {}", out.empty() ? "" : "; ", v.row, v.col, what);
  }
  return out;
}

TopologyReport validate_topology(const GridTopology& topology) {
  TopologyReport report;
  const auto& eta = topology.eta;
  if (eta.rows() != eta.cols() || eta.rows() == 0) {
    report.violations.push_back({TopologyViolation::Kind::kNotSquare, static_cast<int>(eta.rows()),
                                 static_cast<int>(eta.cols())});
    return report;
  }
  const int xi = static_cast<int>(eta.rows());
  for (int r = 0; r < xi; ++r) {
    for (int c = 0; c < xi; ++c) {
      const double v = eta(r, c);
      if (!(v >= 0.0 && v <= 1.0)) report.violations.push_back({TopologyViolation::Kind::kOutOfRange, r, c});
      if (r == c && v != 1.0) report.violations.push_back({TopologyViolation::Kind::kDiagonal, r, c});
      if (r < c && v != eta(c, r)) report.violations.push_back({TopologyViolation::Kind::kAsymmetric, r, c});
    }
  }
  return report;
}

double reference_trajectory(const Eigen::MatrixXd& net, int n, int N) {
  if (N < 1) throw DomainError("reference_trajectory: horizon must be positive");
  if (n < 0 || n >= net.cols()) {
    throw DataRangeError(fmt::format("reference_trajectory: step {} outside data range [0, {})", n, net.cols()));
  }
  if (net.rows() == 0) throw DataRangeError("reference_trajectory: no households");
  const int width = std::min(N, n + 1);
  const int first = n - std::min(n, N - 1);
  return net.middleCols(first, width).sum() / (static_cast<double>(net.rows()) * width);
}

Profile reference_profile(const Eigen::MatrixXd& net, int k, int N) {
  Profile zeta(N);
  for (int j = 0; j < N; ++j) zeta[j] = reference_trajectory(net, k + j, N);
  return zeta;
}

Profile average_demand(const Eigen::MatrixXd& profiles) {
  if (profiles.rows() == 0) throw DomainError("average_demand: empty collection");
  return profiles.colwise().mean().transpose();
}

Eigen::MatrixXd stack_net_consumption(const std::vector<Microgrid>& microgrids) {
  std::size_t rows = 0;
  std::size_t cols = std::numeric_limits<std::size_t>::max();
  for (const auto& mg : microgrids) {
    rows += mg.households.size();
    for (const auto& h : mg.households) cols = std::min(cols, h.length());
  }
  if (rows == 0) return {};
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& mg : microgrids) {
    for (const auto& h : mg.households) out.row(r++) = h.net_window(0, cols).transpose();
  }
  return out;
}

}  // namespace mgopt
