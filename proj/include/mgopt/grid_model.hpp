#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mgopt {

/// Power or energy profile over a prediction horizon (one entry per step).
using Profile = Eigen::VectorXd;

/// Storage device of one household. A household without storage has
/// capacity 0 and both power bounds 0.
struct BatteryParams {
  double alpha = 1.0;     ///< self-discharge efficiency per step, (0,1]
  double beta = 1.0;      ///< charging efficiency, (0,1]
  double gamma = 1.0;     ///< discharging efficiency, (0,1]
  double capacity = 0.0;  ///< kWh
  double u_max = 0.0;     ///< max charging power, kW >= 0
  double u_min = 0.0;     ///< max discharging power, kW <= 0

  bool has_storage() const { return capacity > 0.0 && (u_max > 0.0 || u_min < 0.0); }
};

/// Throws DomainError if any parameter is out of its admissible range.
void validate(const BatteryParams& p);

/// A prosumer with load and generation series sampled at a common period,
/// indexed from absolute step 0.
class Household {
 public:
  Household(int id, BatteryParams battery, std::vector<double> load, std::vector<double> generation);

  int id() const { return id_; }
  const BatteryParams& battery() const { return battery_; }
  const std::vector<double>& load() const { return load_; }
  const std::vector<double>& generation() const { return generation_; }
  /// Net consumption w = load - generation.
  const std::vector<double>& net() const { return net_; }
  std::size_t length() const { return net_.size(); }

  /// Net consumption over [offset, offset + length).
  Profile net_window(std::size_t offset, std::size_t length) const;

 private:
  int id_;
  BatteryParams battery_;
  std::vector<double> load_;
  std::vector<double> generation_;
  std::vector<double> net_;
};

struct Microgrid {
  int index = 0;
  std::vector<Household> households;

  Microgrid(int index, std::vector<Household> households);
  int size() const { return static_cast<int>(households.size()); }
};

struct GridTopology {
  /// Symmetric efficiency matrix; eta(nu, kappa) == 0 means no line.
  Eigen::MatrixXd eta;

  int xi() const { return static_cast<int>(eta.rows()); }
  bool connected(int nu, int kappa) const { return eta(nu, kappa) > 0.0; }
};

struct ScenarioConfig {
  double T = 0.5;  ///< hours per step
  int N = 6;       ///< prediction horizon
  int sim_length = 48;
  std::uint64_t rng_seed = 1;
};

void validate(const ScenarioConfig& cfg);

struct TopologyViolation {
  enum class Kind { kNotSquare, kOutOfRange, kDiagonal, kAsymmetric };
  Kind kind;
  int row;
  int col;
};

struct TopologyReport {
  std::vector<TopologyViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

/// Checks unit diagonal, entries in [0,1] and symmetry. Asymmetric pairs are
/// reported once, at (row, col) with row < col.
TopologyReport validate_topology(const GridTopology& topology);

/// Overall average net consumption at absolute step n, averaged over all
/// households (rows of `net`) and the trailing window of min(N, n+1) steps.
double reference_trajectory(const Eigen::MatrixXd& net, int n, int N);

/// Reference values for steps k..k+N-1.
Profile reference_profile(const Eigen::MatrixXd& net, int k, int N);

/// Pointwise mean of the rows of `profiles`.
Profile average_demand(const Eigen::MatrixXd& profiles);

/// Stacks the net consumption of every household of every microgrid, in
/// microgrid order, into a households x steps matrix.
Eigen::MatrixXd stack_net_consumption(const std::vector<Microgrid>& microgrids);

}  // namespace mgopt
