#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgopt/config.hpp"
#include "mgopt/harness.hpp"

namespace mgopt {

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitSolver = 4 };

/// Maps library exceptions onto exit codes: configuration and domain errors
/// give 2, data errors 3, solver and fitting errors 4.
int exit_code(const std::exception& e);

/// Command-line overrides on top of the configuration file.
struct CommandOptions {
  std::string config_path;  ///< empty selects the committed scenario
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;  ///< replaces the battery and synthetic data seeds
  std::optional<SolverChoice> solver;
  std::optional<int> stride;
  std::optional<std::vector<int>> p_values;
};

/// Loads the configuration and applies the overrides.
RunConfig resolve_config(const CommandOptions& opt);

/// '{mg}' in `pattern` replaced by `mg`.
std::string expand_path(const std::string& pattern, int mg);

/// Fitted surrogates, indexed by microgrid.
struct SurrogateModels {
  std::vector<std::shared_ptr<const RbfModel>> rbf;
  std::vector<std::shared_ptr<const NnModel>> nn;
};

/// Training samples of every surrogate microgrid: read from `samples_path`
/// when set, otherwise collected from an ADMM closed loop over the training
/// window.
std::map<int, SampleSet> training_samples(const RunConfig& c, const Scenario& s);

/// Fits the requested kinds on `samples`; `stride` overrides the configured one.
SurrogateModels fit_surrogates(const RunConfig& c, const std::map<int, SampleSet>& samples, bool rbf, bool nn,
                               std::optional<int> stride = std::nullopt);

/// Models from the configured paths (or `out_dir/<kind>_mg<k>.json`). Throws
/// ConfigError if a file is missing.
SurrogateModels load_surrogates(const RunConfig& c, const Scenario& s, SolverChoice solver,
                                const std::string& out_dir);

struct ComparisonRow {
  SolverChoice solver;
  double closed_loop_cost = 0.0;
  double mean_call_ms = 0.0;  ///< per lower-level call on the first surrogate microgrid
  long transmissions = 0;
};

std::vector<ComparisonRow> compare(const std::vector<MpcLog>& logs, int timing_microgrid);

// Every command validates its inputs and computes all results before it
// writes any file.
void cmd_gen_data(const CommandOptions& opt, std::ostream& log);
void cmd_simulate(const CommandOptions& opt, std::ostream& log);
void cmd_train(const CommandOptions& opt, std::ostream& log);
void cmd_compare(const CommandOptions& opt, std::ostream& log);
void cmd_perturb(const CommandOptions& opt, std::ostream& log);

/// Parses argv and runs one subcommand; returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgopt
