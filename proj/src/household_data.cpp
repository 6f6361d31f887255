#include "mgopt/household_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "mgopt/errors.hpp"

namespace mgopt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_field(const std::string& cell, const std::string& path, int line, const char* what) {
  std::istringstream in(trim(cell));
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw DataError(fmt::format("{}:{}: {} '{}' is not a valid number", path, line, what, cell));
  return v;
}

}  // namespace

HouseholdData load_household_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path));
  struct Row {
    long step;
    double load, gen;
    int line;
  };
  std::map<int, std::vector<Row>> rows;
  std::string text;
  int line = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line;
    const std::string t = trim(text);
    if (t.empty() || t[0] == '#') continue;
    if (!header) {
      if (t != "step,household,load_kw,gen_kw") {
        throw DataError(fmt::format("{}:{}: expected header 'step,household,load_kw,gen_kw'", path, line));
      }
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(t);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() != 4) throw DataError(fmt::format("{}:{}: expected 4 fields, got {}", path, line, cells.size()));
    Row r{parse_field<long>(cells[0], path, line, "step"), parse_field<double>(cells[2], path, line, "load_kw"),
          parse_field<double>(cells[3], path, line, "gen_kw"), line};
    const int id = parse_field<int>(cells[1], path, line, "household");
    if (r.step < 0) throw DataError(fmt::format("{}:{}: negative step", path, line));
    if (!std::isfinite(r.load) || !std::isfinite(r.gen) || r.load < 0.0 || r.gen < 0.0) {
      throw DataError(fmt::format("{}:{}: load and generation must be finite and non-negative", path, line));
    }
    rows[id].push_back(r);
  }
  if (!header) throw DataError(fmt::format("{}: missing header 'step,household,load_kw,gen_kw'", path));

  HouseholdData data;
  if (rows.empty()) data.warnings.push_back(fmt::format("{}: no household rows", path));
  for (auto& [id, list] : rows) {
    std::sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.step < b.step; });
    HouseholdSeries h;
    h.id = id;
    for (std::size_t n = 0; n < list.size(); ++n) {
      if (list[n].step != static_cast<long>(n)) {
        if (list[n].step < static_cast<long>(n)) {
          throw DataError(fmt::format("{}:{}: household {} repeats step {}", path, list[n].line, id, list[n].step));
        }
        throw DataError(fmt::format("{}: household {} has a gap: step {} is missing", path, id, n));
      }
      h.load.push_back(list[n].load);
      h.generation.push_back(list[n].gen);
    }
    data.households.push_back(std::move(h));
  }
  return data;
}

void save_household_data(const std::vector<HouseholdSeries>& data, const std::string& path,
                         const std::vector<std::string>& comment) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  for (const auto& c : comment) out << "# " << c << '\n';
  out << "step,household,load_kw,gen_kw\n";
  for (const auto& h : data) {
    if (h.load.size() != h.generation.size()) {
      throw DataError(fmt::format("household {}: load and generation lengths differ", h.id));
    }
    for (std::size_t n = 0; n < h.load.size(); ++n) out << fmt::format("{},{},{},{}\n", n, h.id, h.load[n], h.generation[n]);
  }
  if (!out) throw DataError(fmt::format("error writing '{}'", path));
}

void validate(const SyntheticConfig& c) {
  if (c.households < 0 || c.days < 0 || c.steps_per_day < 1) {
    throw DomainError("synthetic data: households and days must be >= 0, steps_per_day >= 1");
  }
  if (!(c.base_load > 0.0) || c.morning_peak < 0.0 || c.evening_peak < 0.0 || c.pv_peak < 0.0) {
    throw DomainError("synthetic data: base_load must be > 0 and peaks >= 0");
  }
  if (c.pv_share < 0.0 || c.pv_share > 1.0 || c.size_spread < 0.0 || c.size_spread >= 1.0 || c.noise < 0.0) {
    throw DomainError("synthetic data: pv_share in [0,1], size_spread in [0,1), noise >= 0 required");
  }
}

std::vector<HouseholdSeries> generate_synthetic(const SyntheticConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> weather(c.days);
  for (auto& w : weather) w = 0.45 + 0.55 * u(rng);

  auto bump = [](double h, double centre, double width) {
    const double d = (h - centre) / width;
    return std::exp(-0.5 * d * d);
  };
  const double hours_per_step = 24.0 / c.steps_per_day;
  std::vector<double> load_shape(c.steps_per_day), sun(c.steps_per_day);
  for (int s = 0; s < c.steps_per_day; ++s) {
    const double h = (s + 0.5) * hours_per_step;
    load_shape[s] = c.base_load + c.morning_peak * bump(h, 7.5, 1.2) + c.evening_peak * bump(h, 19.0, 1.8);
    const double phase = (h - 6.0) / 13.0;  // sunrise 06:00, sunset 19:00
    sun[s] = phase > 0.0 && phase < 1.0 ? std::pow(std::sin(std::numbers::pi * phase), 1.5) : 0.0;
  }

  std::vector<HouseholdSeries> out;
  for (int id = 0; id < c.households; ++id) {
    HouseholdSeries h;
    h.id = id;
    const double load_size = 1.0 + c.size_spread * (2.0 * u(rng) - 1.0);
    const bool has_pv = u(rng) < c.pv_share;
    const double pv_size = has_pv ? 1.0 + c.size_spread * (2.0 * u(rng) - 1.0) : 0.0;
    for (int d = 0; d < c.days; ++d) {
      const double cloud = std::clamp(weather[d] * (1.0 + 0.5 * c.noise * gauss(rng)), 0.05, 1.0);
      for (int s = 0; s < c.steps_per_day; ++s) {
        const double jitter = std::max(0.2, 1.0 + c.noise * gauss(rng));
        h.load.push_back(load_size * load_shape[s] * jitter);
        h.generation.push_back(c.pv_peak * pv_size * cloud * sun[s]);
      }
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace mgopt
