#pragma once

#include <string>
#include <vector>

#include "mgopt/config.hpp"
#include "mgopt/harness.hpp"
#include "mgopt/household_data.hpp"

namespace mgopt {

/// The CSV named by `data_path`, or synthetic data when it is empty. Loader
/// warnings are appended to `warnings` when given.
std::vector<HouseholdSeries> scenario_households(const RunConfig& c, std::vector<std::string>* warnings = nullptr);

/// Households are assigned to microgrids in the order given; battery
/// parameters are drawn uniformly within +-spread of their means from
/// `c.seed`. Throws DataError if there are too few households or steps.
Scenario build_scenario(const RunConfig& c, const std::vector<HouseholdSeries>& data);
Scenario build_scenario(const RunConfig& c);

/// MPC options for the evaluation window of `c`. Surrogate models are not loaded.
MpcOptions mpc_options(const RunConfig& c, SolverChoice solver);

/// The regression scenario: four microgrids of 50, 10, 10 and 10 households
/// on two weeks of synthetic training data and one evaluation day.
RunConfig committed_config();

}  // namespace mgopt
