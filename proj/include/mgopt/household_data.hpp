#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mgopt {

/// Load and generation of one household, kW, one entry per step from step 0.
struct HouseholdSeries {
  int id = 0;
  std::vector<double> load;
  std::vector<double> generation;

  bool operator==(const HouseholdSeries&) const = default;
};

struct HouseholdData {
  std::vector<HouseholdSeries> households;  ///< ordered by id
  std::vector<std::string> warnings;
};

/// Reads `step,household,load_kw,gen_kw` rows; '#' lines are comments. Rows
/// may come in any order, but every household must cover steps 0..L-1 without
/// gaps or repeats. Throws DataError naming the line or household.
HouseholdData load_household_data(const std::string& path);

/// Writes the same format, households in the given order, steps ascending.
/// `comment` lines are written first, each prefixed with "# ".
void save_household_data(const std::vector<HouseholdSeries>& data, const std::string& path,
                         const std::vector<std::string>& comment = {});

/// Residential prosumers on a half-hour grid. Each day has a morning and an
/// evening load peak and a solar bell between sunrise and sunset, scaled by
/// a per-day weather factor shared by all households. Load and PV sizes vary
/// per household; `noise` adds per-step multiplicative jitter to the load and
/// per-household jitter to the weather.
struct SyntheticConfig {
  int households = 80;
  int days = 16;
  int steps_per_day = 48;
  double base_load = 0.175;     ///< kW
  double morning_peak = 0.315;  ///< kW above base, around 07:30
  double evening_peak = 0.63;   ///< kW above base, around 19:00
  double pv_peak = 0.91;        ///< kW at solar noon on a clear day
  double pv_share = 0.7;       ///< fraction of households with PV
  double size_spread = 0.4;    ///< relative spread of per-household load and PV sizes
  double noise = 0.15;
  std::uint64_t seed = 1;
};

void validate(const SyntheticConfig& cfg);

std::vector<HouseholdSeries> generate_synthetic(const SyntheticConfig& cfg);

}  // namespace mgopt
