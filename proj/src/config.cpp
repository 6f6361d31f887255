#include "mgopt/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mgopt/errors.hpp"

namespace mgopt {

RunConfig::RunConfig() {
  eta.resize(4, 4);
  eta << 1, .9, .9, .85, .9, 1, 0, .85, .9, 0, 1, 0, .85, .85, 0, 1;
}

namespace {

struct BadValue {
  std::string why;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(s);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <typename T>
T to_int(const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadValue{"expected an integer"};
  return v;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw BadValue{"expected a finite number"};
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw BadValue{"expected true or false"};
}

template <typename T>
std::vector<T> to_int_list(const std::string& s) {
  std::vector<T> out;
  if (s.empty()) return out;
  for (const auto& c : split(s, ',')) out.push_back(to_int<T>(c));
  return out;
}

Eigen::MatrixXd to_matrix(const std::string& s) {
  const auto rows = split(s, ';');
  Eigen::MatrixXd m(rows.size(), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto cells = split(rows[r], ',');
    if (cells.size() != rows.size()) throw BadValue{"expected a square matrix with rows separated by ';'"};
    for (std::size_t c = 0; c < cells.size(); ++c) m(r, c) = to_double(cells[c]);
  }
  return m;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

std::string matrix_text(const Eigen::MatrixXd& m) {
  std::string out;
  for (int r = 0; r < m.rows(); ++r) {
    if (r) out += "; ";
    for (int c = 0; c < m.cols(); ++c) out += fmt::format("{}{}", c ? "," : "", m(r, c));
  }
  return out;
}

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MG_FIELD(name, type, doc, member, parse, print)                                     \
  Field {                                                                                   \
    {name, type, doc}, [](RunConfig& c, const std::string& v) { c.member = parse(v); },     \
        [](const RunConfig& c) { return print(c.member); }                                  \
  }

std::string str(const std::string& s) { return s; }
std::string num(double v) { return fmt::format("{}", v); }
template <typename T>
std::string integer(T v) {
  return fmt::format("{}", v);
}
std::string boolean(bool b) { return b ? "true" : "false"; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MG_FIELD("scenario.id", "string", "name written into every output", scenario_id, str, str),
      MG_FIELD("scenario.T", "double", "step length, hours", T, to_double, num),
      MG_FIELD("scenario.N", "int", "prediction horizon, steps", N, to_int<int>, integer<int>),
      MG_FIELD("scenario.sizes", "int list", "households per microgrid", sizes, to_int_list<int>, join<int>),
      MG_FIELD("scenario.eta", "matrix", "line efficiencies, rows separated by ';'", eta, to_matrix, matrix_text),
      MG_FIELD("scenario.start_step", "int", "first simulated step", start_step, to_int<int>, integer<int>),
      MG_FIELD("scenario.sim_length", "int", "simulated MPC steps", sim_length, to_int<int>, integer<int>),
      MG_FIELD("scenario.train_start", "int", "first step of the sample collection run", train_start, to_int<int>,
               integer<int>),
      MG_FIELD("scenario.train_steps", "int", "length of the sample collection run", train_steps, to_int<int>,
               integer<int>),
      MG_FIELD("scenario.seed", "uint", "seed of the battery parameter draws", seed, to_int<std::uint64_t>,
               integer<std::uint64_t>),
      MG_FIELD("data.path", "path", "household CSV; empty selects synthetic data", data_path, str, str),
      MG_FIELD("synthetic.households", "int", "households generated", synthetic.households, to_int<int>, integer<int>),
      MG_FIELD("synthetic.days", "int", "days generated", synthetic.days, to_int<int>, integer<int>),
      MG_FIELD("synthetic.steps_per_day", "int", "steps per day", synthetic.steps_per_day, to_int<int>, integer<int>),
      MG_FIELD("synthetic.base_load", "double", "kW", synthetic.base_load, to_double, num),
      MG_FIELD("synthetic.morning_peak", "double", "kW above base", synthetic.morning_peak, to_double, num),
      MG_FIELD("synthetic.evening_peak", "double", "kW above base", synthetic.evening_peak, to_double, num),
      MG_FIELD("synthetic.pv_peak", "double", "kW at solar noon, clear sky", synthetic.pv_peak, to_double, num),
      MG_FIELD("synthetic.pv_share", "double", "fraction of households with PV", synthetic.pv_share, to_double, num),
      MG_FIELD("synthetic.size_spread", "double", "relative spread of household sizes", synthetic.size_spread,
               to_double, num),
      MG_FIELD("synthetic.noise", "double", "relative load jitter", synthetic.noise, to_double, num),
      MG_FIELD("synthetic.seed", "uint", "seed of the generator", synthetic.seed, to_int<std::uint64_t>,
               integer<std::uint64_t>),
      MG_FIELD("battery.capacity", "double", "mean capacity, kWh", capacity, to_double, num),
      MG_FIELD("battery.u_max", "double", "mean charging bound, kW", u_max, to_double, num),
      MG_FIELD("battery.u_min", "double", "mean discharging bound, kW (negative)", u_min, to_double, num),
      MG_FIELD("battery.spread", "double", "uniform relative spread around the means", battery_spread, to_double,
               num),
      MG_FIELD("battery.alpha", "double", "self-discharge efficiency", alpha, to_double, num),
      MG_FIELD("battery.beta", "double", "charging efficiency", beta, to_double, num),
      MG_FIELD("battery.gamma", "double", "discharging efficiency", gamma, to_double, num),
      MG_FIELD("battery.soc_fraction", "double", "initial SoC / capacity", soc_fraction, to_double, num),
      MG_FIELD("admm.rho", "double", "penalty parameter", admm.rho, to_double, num),
      MG_FIELD("admm.max_iters", "int", "iteration cap", admm.max_iters, to_int<int>, integer<int>),
      MG_FIELD("admm.primal_tol", "double", "bound on max |z - a|", admm.primal_tol, to_double, num),
      MG_FIELD("admm.cost_tol", "double", "bound on the cost change", admm.cost_tol, to_double, num),
      MG_FIELD("admm.warm_start", "bool", "reuse the previous call's iterates", admm.warm_start, to_bool, boolean),
      MG_FIELD("bilevel.j_max", "int", "bidirectional iteration cap", bilevel.j_max, to_int<int>, integer<int>),
      MG_FIELD("bilevel.eps", "double", "stagnation threshold on the cost improvement", bilevel.eps, to_double, num),
      MG_FIELD("exchange.eps", "double", "bound on two-way flows", exchange.eps, to_double, num),
      MG_FIELD("exchange.enumeration_limit", "int", "max lines solved by enumerating orientations",
               exchange.enumeration_limit, to_int<int>, integer<int>),
      MG_FIELD("exchange.multistarts", "int", "local search starts beyond the limit", exchange.multistarts,
               to_int<int>, integer<int>),
      MG_FIELD("exchange.seed", "uint", "seed of the local search", exchange.seed, to_int<std::uint64_t>,
               integer<std::uint64_t>),
      MG_FIELD("surrogate.microgrids", "int list", "microgrids whose lower level is replaced", surrogate_microgrids,
               to_int_list<int>, join<int>),
      MG_FIELD("surrogate.rbf_path", "path", "RBF model file, '{mg}' expands to the index", rbf_path, str, str),
      MG_FIELD("surrogate.nn_path", "path", "NN model file, '{mg}' expands to the index", nn_path, str, str),
      MG_FIELD("surrogate.samples_path", "path", "training samples, '{mg}' expands; empty collects them",
               samples_path, str, str),
      Field{{"surrogate.kernel", "string", "gaussian, multiquadric or thin-plate"},
            [](RunConfig& c, const std::string& v) {
              try {
                c.kernel.kind = kernel_from_string(v);
              } catch (const ConfigError& e) {
                throw BadValue{e.what()};
              }
            },
            [](const RunConfig& c) { return to_string(c.kernel.kind); }},
      MG_FIELD("surrogate.shape", "double", "kernel shape; <= 0 selects the median center distance", kernel.shape,
               to_double, num),
      MG_FIELD("surrogate.ridge", "double", "diagonal added to the kernel matrix", ridge, to_double, num),
      MG_FIELD("surrogate.rbf_stride", "int", "keep every n-th sample for the RBF fit", rbf_stride, to_int<int>,
               integer<int>),
      MG_FIELD("surrogate.nn_stride", "int", "keep every n-th sample for the NN fit", nn_stride, to_int<int>,
               integer<int>),
      MG_FIELD("nn.hidden", "int list", "hidden layer widths", nn.hidden, to_int_list<int>, join<int>),
      MG_FIELD("nn.epochs", "int", "epoch cap", nn.epochs, to_int<int>, integer<int>),
      MG_FIELD("nn.learning_rate", "double", "Adam step size", nn.learning_rate, to_double, num),
      MG_FIELD("nn.batch_size", "int", "mini-batch size", nn.batch_size, to_int<int>, integer<int>),
      MG_FIELD("nn.validation_split", "double", "held-out fraction", nn.validation_split, to_double, num),
      MG_FIELD("nn.patience", "int", "epochs without improvement before stopping", nn.patience, to_int<int>,
               integer<int>),
      MG_FIELD("nn.seed", "uint", "initialization and shuffling seed", nn.seed, to_int<std::uint64_t>,
               integer<std::uint64_t>),
      MG_FIELD("perturb.p", "int list", "noise exponents", p_values, to_int_list<int>, join<int>),
      MG_FIELD("perturb.seeds", "uint list", "noise seeds", perturb_seeds, to_int_list<std::uint64_t>,
               join<std::uint64_t>),
  };
  return table;
}

#undef MG_FIELD

}  // namespace

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(c.T > 0.0)) fail("scenario.T must be > 0");
  if (c.N < 1) fail("scenario.N must be >= 1");
  if (c.sizes.empty()) fail("scenario.sizes must list at least one microgrid");
  for (int s : c.sizes)
    if (s < 1) fail("scenario.sizes entries must be >= 1");
  if (c.eta.rows() != static_cast<int>(c.sizes.size())) {
    fail(fmt::format("scenario.eta is {}x{} but scenario.sizes lists {} microgrids", c.eta.rows(), c.eta.cols(),
                     c.sizes.size()));
  }
  const auto topo = validate_topology(GridTopology{c.eta});
  if (!topo.ok()) fail("scenario.eta: " + topo.describe());
  if (c.start_step < 0 || c.sim_length < 0 || c.train_start < 0 || c.train_steps < 0) {
    fail("scenario step counts must be >= 0");
  }
  if (c.capacity < 0.0 || c.u_max < 0.0 || c.u_min > 0.0) fail("battery means: capacity >= 0, u_max >= 0, u_min <= 0");
  if (c.battery_spread < 0.0 || c.battery_spread >= 1.0) fail("battery.spread must be in [0, 1)");
  for (double e : {c.alpha, c.beta, c.gamma})
    if (!(e > 0.0 && e <= 1.0)) fail("battery efficiencies must be in (0, 1]");
  if (c.soc_fraction < 0.0 || c.soc_fraction > 1.0) fail("battery.soc_fraction must be in [0, 1]");
  try {
    validate(c.admm);
    validate(c.bilevel);
    validate(c.synthetic);
  } catch (const DomainError& e) {
    fail(e.what());
  }
  if (!(c.exchange.eps > 0.0) || c.exchange.enumeration_limit < 0 || c.exchange.multistarts < 1) {
    fail("exchange: eps > 0, enumeration_limit >= 0, multistarts >= 1 required");
  }
  for (int k : c.surrogate_microgrids)
    if (k < 0 || k >= static_cast<int>(c.sizes.size())) fail(fmt::format("surrogate.microgrids: no microgrid {}", k));
  if (c.ridge < 0.0) fail("surrogate.ridge must be >= 0");
  if (c.rbf_stride < 1 || c.nn_stride < 1) fail("surrogate strides must be >= 1");
  for (int h : c.nn.hidden)
    if (h < 1) fail("nn.hidden widths must be >= 1");
  if (c.nn.epochs < 1 || c.nn.batch_size < 1 || c.nn.patience < 1 || !(c.nn.learning_rate > 0.0) ||
      c.nn.validation_split < 0.0 || c.nn.validation_split >= 1.0) {
    fail("nn: epochs, batch_size, patience >= 1, learning_rate > 0, validation_split in [0, 1) required");
  }
  for (int p : c.p_values)
    if (p < 0) fail("perturb.p entries must be >= 0");
  if (c.data_path.empty()) {
    int total = 0;
    for (int s : c.sizes) total += s;
    if (c.synthetic.households < total) {
      fail(fmt::format("synthetic.households = {} but the microgrids need {}", c.synthetic.households, total));
    }
    const long have = static_cast<long>(c.synthetic.days) * c.synthetic.steps_per_day;
    const long need = std::max(c.start_step + c.sim_length, c.train_start + c.train_steps) + c.N - 1;
    if (have < need) fail(fmt::format("synthetic data covers {} steps but {} are needed", have, need));
  }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, lineno));
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key.key == key; });
    if (it == table.end()) throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, lineno, key));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("{}:{}: '{}' is set twice", source, lineno, key));
    try {
      it->set(c, value);
    } catch (const BadValue& e) {
      throw ConfigError(fmt::format("{}:{}: {}: {} (got '{}')", source, lineno, key, e.why, value));
    }
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config(ss.str(), path);
  const auto dir = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.data_path, &c.rbf_path, &c.nn_path, &c.samples_path}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (dir / *p).lexically_normal().string();
  }
  return c;
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key.key, f.get(c));
  return out;
}

std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace mgopt
