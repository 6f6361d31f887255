#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mgopt/commands.hpp"

using namespace mgopt;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "scenario.id = small\n"
    "scenario.sizes = 3, 2, 2, 2\n"
    "scenario.N = 3\n"
    "scenario.start_step = 30\n"
    "scenario.sim_length = 4\n"
    "scenario.train_steps = 40\n"
    "synthetic.households = 9\n"
    "synthetic.days = 2\n"
    "admm.rho = 0.1\n"
    "surrogate.rbf_stride = 2\n"
    "nn.epochs = 50\n"
    "perturb.seeds = 1, 2\n";

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "mgopt_test_commands";
  std::string out, err;
  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string config(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  }
  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "mgopt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
    out = o.str();
    err = e.str();
    return code;
  }
};

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ostringstream s;
  s << std::ifstream(p).rdbuf();
  return s.str();
}

/// Data rows of a CSV written by a command: after three comment lines and the
/// column header.
std::vector<std::vector<std::string>> rows(const fs::path& p) {
  const auto all = lines(p);
  REQUIRE(all.size() >= 4);
  for (int i = 0; i < 3; ++i) CHECK(all[i].rfind("# ", 0) == 0);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 4; i < all.size(); ++i) {
    std::vector<std::string> cells;
    std::stringstream ss(all[i]);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST_CASE("empty simulation writes well-formed files") {
  Workspace w;
  const auto cfg = w.config("zero.cfg", std::string(kSmall) + "scenario.sim_length = 0\n"
                                                            "bilevel.j_max = 3\n");
  // sim_length is set twice above.
  CHECK(w.run({"simulate", "--config", cfg, "--out", (w.dir / "a").string()}) == kExitConfig);
  CHECK_FALSE(fs::exists(w.dir / "a"));

  const auto ok = w.config("ok.cfg", std::string(kSmall).replace(std::string(kSmall).find("sim_length = 4"), 14,
                                                                  "sim_length = 0"));
  REQUIRE(w.run({"simulate", "--config", ok, "--out", (w.dir / "b").string()}) == kExitOk);
  for (const char* name : {"stage_costs_admm.csv", "open_loop_admm.csv", "timing_admm.csv"}) {
    const auto l = lines(w.dir / "b" / name);
    REQUIRE(l.size() >= 4);
    CHECK(l[0] == "# mgopt simulate v1");
    CHECK(l[1].find("scenario=small config_hash=") == 2);
    CHECK(l[1].size() == std::string("# scenario=small config_hash=").size() + 16);
    CHECK(l[2].rfind("# units:", 0) == 0);
  }
  CHECK(lines(w.dir / "b" / "stage_costs_admm.csv")[3] ==
        "step,zeta_kw,stage_cost,realized_cost,open_loop_cost,iterations,transmissions");
  CHECK(rows(w.dir / "b" / "stage_costs_admm.csv").empty());
  CHECK(rows(w.dir / "b" / "open_loop_admm.csv").empty());
  // One zero row per microgrid.
  for (const auto& r : rows(w.dir / "b" / "timing_admm.csv")) CHECK(r[2] == "0");
  CHECK(rows(w.dir / "b" / "transmissions_admm.csv").size() == 4);
}

TEST_CASE("errors map to exit codes and leave no output") {
  Workspace w;
  const auto out = (w.dir / "out").string();
  CHECK(w.run({}) == kExitConfig);
  CHECK(w.run({"simulate", "--bogus"}) == kExitConfig);
  CHECK(w.run({"simulate", "--solver", "sqp"}) == kExitConfig);
  CHECK(w.run({"simulate", "--config", (w.dir / "missing.cfg").string()}) == kExitConfig);
  CHECK(w.run({"simulate", "--config", w.config("u.cfg", "admm.rhoo = 1\n"), "--out", out}) == kExitConfig);
  CHECK(w.err.find("unknown key 'admm.rhoo'") != std::string::npos);
  CHECK(w.run({"perturb", "--config", w.config("p.cfg", kSmall), "--p", "1,-2", "--out", out}) == kExitConfig);

  const auto bad_data = w.config("bad.csv", "step,household,load_kw,gen_kw\n0,0,x,0\n");
  CHECK(w.run({"simulate", "--config", w.config("d.cfg", std::string(kSmall) + "data.path = bad.csv\n"), "--out",
               out}) == kExitData);
  CHECK(w.err.find("bad.csv:2") != std::string::npos);

  // A surrogate run needs a model.
  CHECK(w.run({"simulate", "--config", w.config("s.cfg", kSmall), "--solver", "nn", "--out", out}) == kExitConfig);
  CHECK(w.err.find("run 'train' first") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  CHECK(w.run({"gen-data", "--help"}) == kExitOk);
}

TEST_CASE("gen-data is deterministic and seedable") {
  Workspace w;
  const auto cfg = w.config("g.cfg", kSmall);
  REQUIRE(w.run({"gen-data", "--config", cfg, "--out", (w.dir / "a").string()}) == kExitOk);
  REQUIRE(w.run({"gen-data", "--config", cfg, "--out", (w.dir / "b").string()}) == kExitOk);
  REQUIRE(w.run({"gen-data", "--config", cfg, "--seed", "9", "--out", (w.dir / "c").string()}) == kExitOk);
  const auto a = slurp(w.dir / "a" / "households.csv");
  CHECK(a == slurp(w.dir / "b" / "households.csv"));
  CHECK(a != slurp(w.dir / "c" / "households.csv"));
  const auto data = load_household_data((w.dir / "a" / "households.csv").string());
  CHECK(data.households.size() == 9);
  CHECK(data.households[0].load.size() == 96);

  // The written file feeds a simulation with the same result as the generator.
  const auto from_file = w.config("f.cfg", std::string(kSmall) + "data.path = a/households.csv\n");
  REQUIRE(w.run({"simulate", "--config", from_file, "--out", (w.dir / "f").string()}) == kExitOk);
  REQUIRE(w.run({"simulate", "--config", cfg, "--out", (w.dir / "g").string()}) == kExitOk);
  const auto f = rows(w.dir / "f" / "stage_costs_admm.csv"), g = rows(w.dir / "g" / "stage_costs_admm.csv");
  REQUIRE(f.size() == 4);
  for (std::size_t t = 0; t < f.size(); ++t) CHECK(f[t] == g[t]);
}

TEST_CASE("train, simulate and compare") {
  Workspace w;
  const auto cfg = w.config("c.cfg", kSmall);
  const auto out = (w.dir / "run").string();
  REQUIRE(w.run({"train", "--config", cfg, "--solver", "rbf", "--out", out}) == kExitOk);
  CHECK(fs::exists(w.dir / "run" / "rbf_mg0.json"));
  const auto samples = load_samples((w.dir / "run" / "samples_mg0.csv").string());
  CHECK(samples.I == 3);
  const auto rbf = load_rbf((w.dir / "run" / "rbf_mg0.json").string(), 3, 3);
  CHECK(rbf.centers.rows() == static_cast<long>((samples.size() + 1) / 2));

  const auto reuse = w.config("r.cfg", std::string(kSmall) + "surrogate.samples_path = run/samples_mg{mg}.csv\n");
  REQUIRE(w.run({"train", "--config", reuse, "--solver", "nn", "--out", out}) == kExitOk);
  CHECK(w.out.find("(loaded)") != std::string::npos);
  CHECK_FALSE(fs::exists(w.dir / "run" / "samples_mg1.csv"));

  REQUIRE(w.run({"simulate", "--config", cfg, "--solver", "rbf", "--out", out}) == kExitOk);
  const auto timing = rows(w.dir / "run" / "timing_rbf.csv");
  REQUIRE(timing.size() == 4);
  CHECK(timing[0][1] == "rbf");
  CHECK(timing[1][1] == "admm");

  REQUIRE(w.run({"compare", "--config", cfg, "--out", out}) == kExitOk);
  const auto table = rows(w.dir / "run" / "comparison.csv");
  REQUIRE(table.size() == 4);
  CHECK(table[0][0] == "none");
  CHECK(table[1][0] == "admm");
  CHECK(table[2][0] == "rbf");
  CHECK(table[3][0] == "nn");
  CHECK(std::stod(table[0][1]) > std::stod(table[1][1]));
  CHECK(std::stod(table[0][2]) == 0.0);
  CHECK(std::stol(table[0][3]) == 0);
  CHECK(std::stol(table[2][3]) < std::stol(table[1][3]));
  for (const char* s : {"none", "admm", "rbf", "nn"}) {
    CHECK(rows(w.dir / "run" / (std::string("stage_costs_") + s + ".csv")).size() == 4);
  }
}

TEST_CASE("perturb") {
  Workspace w;
  const auto cfg = w.config("p.cfg", kSmall);
  REQUIRE(w.run({"perturb", "--config", cfg, "--p", "15,0", "--out", w.dir.string()}) == kExitOk);
  const auto table = rows(w.dir / "perturbation.csv");
  REQUIRE(table.size() == 5);
  CHECK(table[0][0] == "inf");
  CHECK(std::stod(table[0][3]) == 0.0);
  for (std::size_t r = 1; r < table.size(); ++r) {
    if (table[r][0] == "15") CHECK(std::abs(std::stod(table[r][3])) < 1e-6);
  }
  CHECK(table[3][0] == "0");
  CHECK(rows(w.dir / "perturbation_steps.csv").size() == 5 * 4);
}
