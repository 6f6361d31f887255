#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgopt/admm.hpp"
#include "mgopt/bilevel.hpp"
#include "mgopt/exchange.hpp"
#include "mgopt/household_data.hpp"
#include "mgopt/surrogate.hpp"

namespace mgopt {

/// Everything a command needs. Text form: one `key = value` per line, '#'
/// starts a comment, lists are comma separated and matrix rows are separated
/// by ';'. See `config_keys()` for the schema.
struct RunConfig {
  std::string scenario_id = "four-mg";
  double T = 0.5;
  int N = 6;
  std::vector<int> sizes = {50, 10, 10, 10};
  Eigen::MatrixXd eta;
  int start_step = 0;
  int sim_length = 48;
  int train_steps = 672;  ///< steps of ADMM closed loop used to collect surrogate samples
  int train_start = 0;
  std::uint64_t seed = 1;  ///< battery draws

  std::string data_path;  ///< household CSV; empty means synthetic data
  SyntheticConfig synthetic;

  double capacity = 0.98;
  double u_max = 0.25;
  double u_min = -0.24;
  double battery_spread = 0.2;  ///< parameters drawn uniformly within +-spread of their means
  double alpha = 0.99;
  double beta = 0.95;
  double gamma = 0.95;
  double soc_fraction = 0.5;  ///< initial SoC as a fraction of capacity

  AdmmConfig admm;
  BilevelConfig bilevel;
  ExchangeConfig exchange;

  std::vector<int> surrogate_microgrids = {0};
  std::string rbf_path;  ///< '{mg}' is replaced by the microgrid index
  std::string nn_path;
  std::string samples_path;  ///< sample CSV per microgrid; empty means collect by simulation
  KernelSpec kernel;
  double ridge = 1e-10;
  int rbf_stride = 25;
  int nn_stride = 1;
  NnTrainConfig nn;

  std::vector<int> p_values = {0, 1, 2, 3};
  std::vector<std::uint64_t> perturb_seeds = {1, 2, 3, 4, 5};

  RunConfig();
};

struct ConfigKey {
  std::string key;
  std::string type;
  std::string doc;
};

/// Schema of the text form, in the order `to_text` writes it.
std::vector<ConfigKey> config_keys();

/// Parses the text form on top of the defaults. Throws ConfigError naming the
/// line for unknown keys, repeated keys or values of the wrong type, and for
/// values that fail `validate`.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
/// Reads and parses a file. Relative data and model paths are resolved
/// against the file's directory.
RunConfig load_config(const std::string& path);

/// Canonical text form with every key; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& c);
/// FNV-1a hash of the canonical text.
std::uint64_t config_hash(const RunConfig& c);

/// Throws ConfigError if any value is out of range or inconsistent.
void validate(const RunConfig& c);

}  // namespace mgopt
