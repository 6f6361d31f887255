#include "mgopt/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mgopt/errors.hpp"
#include "mgopt/scenario.hpp"

namespace mgopt {

namespace fs = std::filesystem;

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DataRangeError*>(&e)) return kExitData;
  return kExitSolver;
}

RunConfig resolve_config(const CommandOptions& opt) {
  RunConfig c = opt.config_path.empty() ? committed_config() : load_config(opt.config_path);
  if (opt.seed) {
    c.seed = *opt.seed;
    c.synthetic.seed = *opt.seed;
  }
  if (opt.stride) {
    if (*opt.stride < 1) throw ConfigError("--stride must be >= 1");
    c.rbf_stride = c.nn_stride = *opt.stride;
  }
  if (opt.p_values) c.p_values = *opt.p_values;
  validate(c);
  return c;
}

std::string expand_path(const std::string& pattern, int mg) {
  std::string out = pattern;
  const std::string key = "{mg}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos)) {
    out.replace(pos, key.size(), std::to_string(mg));
  }
  return out;
}

namespace {

/// One output table, written only after every table of a command is ready.
struct Csv {
  std::string name;
  std::string units;
  std::string header;
  std::vector<std::string> rows;
};

std::string hex(std::uint64_t h) { return fmt::format("{:016x}", h); }

void write_all(const std::vector<Csv>& files, const std::string& command, const RunConfig& c,
               const std::string& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  for (const auto& f : files) {
    const auto path = (fs::path(out_dir) / f.name).string();
    std::ofstream out(path);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path));
    out << "# mgopt " << command << " v1\n";
    out << "# scenario=" << c.scenario_id << " config_hash=" << hex(config_hash(c)) << "\n";
    out << "# units: " << f.units << "\n";
    out << f.header << "\n";
    for (const auto& r : f.rows) out << r << "\n";
    if (!out) throw DataError(fmt::format("error writing '{}'", path));
    log << "wrote " << path << "\n";
  }
}

std::string model_path(const RunConfig& c, SolverChoice kind, int mg, const std::string& out_dir) {
  const std::string& pattern = kind == SolverChoice::kRbf ? c.rbf_path : c.nn_path;
  if (!pattern.empty()) return expand_path(pattern, mg);
  return (fs::path(out_dir) / fmt::format("{}_mg{}.json", to_string(kind), mg)).string();
}

MpcOptions with_models(const RunConfig& c, SolverChoice solver, const SurrogateModels& m) {
  MpcOptions o = mpc_options(c, solver);
  o.rbf = m.rbf;
  o.nn = m.nn;
  return o;
}

std::vector<Csv> simulation_tables(const MpcLog& log) {
  const std::string tag = to_string(log.solver);
  Csv stage{"stage_costs_" + tag + ".csv", "zeta kW; costs kW^2",
            "step,zeta_kw,stage_cost,realized_cost,open_loop_cost,iterations,transmissions", {}};
  Csv loop{"open_loop_" + tag + ".csv", "costs kW^2", "step,iteration,pre_cost,post_cost", {}};
  for (const auto& st : log.steps) {
    stage.rows.push_back(fmt::format("{},{},{},{},{},{},{}", st.step, st.zeta, st.stage_cost, st.realized_cost,
                                     st.open_loop_cost, st.trace.iterations, st.trace.transmissions));
    for (int j = 0; j < st.trace.iterations; ++j) {
      loop.rows.push_back(fmt::format("{},{},{},{}", st.step, j + 1, st.trace.pre_costs[j], st.trace.post_costs[j]));
    }
  }
  Csv timing{"timing_" + tag + ".csv", "milliseconds per lower-level call, communication excluded",
             "microgrid,solver,calls,mean_ms,variance_ms2", {}};
  for (const auto& t : timing_report(log)) {
    timing.rows.push_back(
        fmt::format("{},{},{},{},{}", t.microgrid, t.solver, t.calls, 1e3 * t.mean, 1e6 * t.variance));
  }
  Csv tx{"transmissions_" + tag + ".csv", "N-profiles sent between households and the central entity",
         "microgrid,transmissions", {}};
  for (std::size_t k = 0; k < log.transmissions_per_mg.size(); ++k) {
    tx.rows.push_back(fmt::format("{},{}", k, log.transmissions_per_mg[k]));
  }
  Csv soc{"soc_" + tag + ".csv", "soc kWh at the start of the step; controls kW",
          "step,microgrid,household,soc_kwh,u_plus_kw,u_minus_kw", {}};
  for (std::size_t k = 0; k < log.soc.size(); ++k) {
    for (int i = 0; i < log.soc[k].rows(); ++i) {
      for (std::size_t t = 0; t < log.steps.size(); ++t) {
        soc.rows.push_back(fmt::format("{},{},{},{},{},{}", log.steps[t].step, k, i, log.soc[k](i, t),
                                       log.u_plus[k](i, t), log.u_minus[k](i, t)));
      }
    }
  }
  return {stage, loop, timing, tx, soc};
}

bool has_models(const RunConfig& c, SolverChoice kind) {
  return !(kind == SolverChoice::kRbf ? c.rbf_path : c.nn_path).empty();
}

}  // namespace

std::map<int, SampleSet> training_samples(const RunConfig& c, const Scenario& s) {
  std::map<int, SampleSet> out;
  if (!c.samples_path.empty()) {
    for (int k : c.surrogate_microgrids) {
      SampleSet set = load_samples(expand_path(c.samples_path, k));
      if (set.N != s.N || set.I != s.microgrids[k].size()) {
        throw DataError(fmt::format("samples for microgrid {} have N = {}, I = {}; the scenario has N = {}, I = {}", k,
                                    set.N, set.I, s.N, s.microgrids[k].size()));
      }
      out[k] = std::move(set);
    }
    return out;
  }
  MpcOptions o = mpc_options(c, SolverChoice::kAdmm);
  o.start_step = c.train_start;
  o.sim_length = c.train_steps;
  std::vector<SampleSet> sets;
  o.samples = &sets;
  run_mpc(s, o);
  for (int k : c.surrogate_microgrids) {
    sets[k].scenario = s.id;
    out[k] = std::move(sets[k]);
  }
  return out;
}

SurrogateModels fit_surrogates(const RunConfig& c, const std::map<int, SampleSet>& samples, bool rbf, bool nn,
                               std::optional<int> stride) {
  SurrogateModels m;
  const int xi = static_cast<int>(c.sizes.size());
  m.rbf.resize(xi);
  m.nn.resize(xi);
  for (const auto& [k, set] : samples) {
    if (rbf) {
      m.rbf[k] = std::make_shared<const RbfModel>(fit_rbf(subsample(set, stride.value_or(c.rbf_stride)), c.kernel, c.ridge));
    }
    if (nn) m.nn[k] = std::make_shared<const NnModel>(fit_nn(subsample(set, stride.value_or(c.nn_stride)), c.nn));
  }
  return m;
}

SurrogateModels load_surrogates(const RunConfig& c, const Scenario& s, SolverChoice solver,
                                const std::string& out_dir) {
  SurrogateModels m;
  m.rbf.resize(s.microgrids.size());
  m.nn.resize(s.microgrids.size());
  for (int k : c.surrogate_microgrids) {
    const auto path = model_path(c, solver, k, out_dir);
    if (!fs::exists(path)) {
      throw ConfigError(fmt::format("no {} model for microgrid {} at '{}'; run 'train' first", to_string(solver), k, path));
    }
    if (solver == SolverChoice::kRbf) m.rbf[k] = std::make_shared<const RbfModel>(load_rbf(path, s.N, s.microgrids[k].size()));
    if (solver == SolverChoice::kNn) m.nn[k] = std::make_shared<const NnModel>(load_nn(path, s.N, s.microgrids[k].size()));
  }
  return m;
}

std::vector<ComparisonRow> compare(const std::vector<MpcLog>& logs, int timing_microgrid) {
  std::vector<ComparisonRow> rows;
  for (const auto& log : logs) {
    ComparisonRow r;
    r.solver = log.solver;
    r.closed_loop_cost = log.total_cost();
    r.transmissions = log.transmissions();
    if (timing_microgrid < static_cast<int>(log.call_seconds.size())) {
      const auto& v = log.call_seconds[timing_microgrid];
      if (!v.empty()) {
        double sum = 0.0;
        for (double d : v) sum += d;
        r.mean_call_ms = 1e3 * sum / v.size();
      }
    }
    rows.push_back(r);
  }
  return rows;
}

void cmd_gen_data(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const auto data = generate_synthetic(c.synthetic);
  fs::create_directories(opt.out_dir);
  const auto path = (fs::path(opt.out_dir) / "households.csv").string();
  save_household_data(data, path,
                      {"mgopt gen-data v1", fmt::format("scenario={} config_hash={}", c.scenario_id, hex(config_hash(c))),
                       fmt::format("units: kW, step length {} h", c.T)});
  log << fmt::format("wrote {} ({} households, {} steps)\n", path, data.size(),
                     data.empty() ? 0 : data.front().load.size());
}

void cmd_simulate(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const SolverChoice solver = opt.solver.value_or(SolverChoice::kAdmm);
  std::vector<std::string> warnings;
  const Scenario s = build_scenario(c, scenario_households(c, &warnings));
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  SurrogateModels models;
  if (solver == SolverChoice::kRbf || solver == SolverChoice::kNn) {
    models = load_surrogates(c, s, solver, opt.out_dir);
  }
  const MpcLog result = run_mpc(s, with_models(c, solver, models));
  log << fmt::format("{}: {} steps, summed stage cost {:.6g}, {} transmissions\n", to_string(solver),
                     result.steps.size(), result.total_cost(), result.transmissions());
  write_all(simulation_tables(result), "simulate", c, opt.out_dir, log);
}

void cmd_train(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const SolverChoice kind = opt.solver.value_or(SolverChoice::kRbf);
  if (kind != SolverChoice::kRbf && kind != SolverChoice::kNn) throw ConfigError("train: --solver must be rbf or nn");
  const Scenario s = build_scenario(c);
  const bool collected = c.samples_path.empty();
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = training_samples(c, s);
  for (const auto& [k, set] : samples) {
    log << fmt::format("microgrid {}: {} samples ({})\n", k, set.size(), collected ? "collected" : "loaded");
  }
  const auto models = fit_surrogates(c, samples, kind == SolverChoice::kRbf, kind == SolverChoice::kNn, opt.stride);
  log << fmt::format("fitted in {:.1f} s\n",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  fs::create_directories(opt.out_dir);
  for (const auto& [k, set] : samples) {
    if (collected) {
      const auto path = (fs::path(opt.out_dir) / fmt::format("samples_mg{}.csv", k)).string();
      save_samples(set, path);
      log << "wrote " << path << "\n";
    }
    const auto path = (fs::path(opt.out_dir) / fmt::format("{}_mg{}.json", to_string(kind), k)).string();
    if (kind == SolverChoice::kRbf) {
      save_model(*models.rbf[k], path);
    } else {
      save_model(*models.nn[k], path);
    }
    log << "wrote " << path << "\n";
  }
}

void cmd_compare(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const Scenario s = build_scenario(c);
  SurrogateModels models;
  models.rbf.resize(s.microgrids.size());
  models.nn.resize(s.microgrids.size());
  const bool rbf_file = has_models(c, SolverChoice::kRbf), nn_file = has_models(c, SolverChoice::kNn);
  if (!rbf_file || !nn_file) {
    log << "collecting training samples\n";
    const auto fitted = fit_surrogates(c, training_samples(c, s), !rbf_file, !nn_file);
    if (!rbf_file) models.rbf = fitted.rbf;
    if (!nn_file) models.nn = fitted.nn;
  }
  if (rbf_file) models.rbf = load_surrogates(c, s, SolverChoice::kRbf, opt.out_dir).rbf;
  if (nn_file) models.nn = load_surrogates(c, s, SolverChoice::kNn, opt.out_dir).nn;

  std::vector<MpcLog> logs;
  for (auto solver : {SolverChoice::kNone, SolverChoice::kAdmm, SolverChoice::kRbf, SolverChoice::kNn}) {
    logs.push_back(run_mpc(s, with_models(c, solver, models)));
    log << fmt::format("{}: summed stage cost {:.6g}\n", to_string(solver), logs.back().total_cost());
  }
  const int timed = c.surrogate_microgrids.empty() ? 0 : c.surrogate_microgrids.front();
  Csv table{"comparison.csv",
            fmt::format("closed-loop cost kW^2; runtime ms per lower-level call on microgrid {}; transmissions in "
                        "N-profiles",
                        timed),
            "solver,closed_loop_cost,mean_call_ms,transmissions", {}};
  for (const auto& r : compare(logs, timed)) {
    table.rows.push_back(
        fmt::format("{},{},{},{}", to_string(r.solver), r.closed_loop_cost, r.mean_call_ms, r.transmissions));
  }
  std::vector<Csv> files{table};
  for (const auto& l : logs) files.push_back(simulation_tables(l).front());
  write_all(files, "compare", c, opt.out_dir, log);
}

void cmd_perturb(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const Scenario s = build_scenario(c);
  const auto study = perturbation_study(s, mpc_options(c, SolverChoice::kAdmm), c.p_values, c.perturb_seeds);
  const double base = study.baseline.total_cost();
  Csv summary{"perturbation.csv",
              "costs kW^2; p is the exponent of the noise amplitude 10^-p; closed_loop_cost sums the "
              "disturbed plans, realized_cost the demand the batteries actually produce",
              "p,seed,closed_loop_cost,relative_change,realized_cost", {}};
  Csv steps{"perturbation_steps.csv", "costs kW^2", "p,seed,step,open_loop_cost,stage_cost,realized_stage_cost", {}};
  summary.rows.push_back(fmt::format("inf,0,{},0,{}", base, study.baseline.total_realized_cost()));
  for (const auto& st : study.baseline.steps) {
    steps.rows.push_back(
        fmt::format("inf,0,{},{},{},{}", st.step, st.open_loop_cost, st.stage_cost, st.realized_cost));
  }
  for (const auto& row : study.rows) {
    summary.rows.push_back(fmt::format("{},{},{},{},{}", row.p, row.seed, row.closed_loop,
                                       base > 0.0 ? (row.closed_loop - base) / base : 0.0, row.closed_loop_realized));
    for (std::size_t t = 0; t < row.stage.size(); ++t) {
      steps.rows.push_back(fmt::format("{},{},{},{},{},{}", row.p, row.seed, study.baseline.steps[t].step,
                                       row.open_loop[t], row.stage[t], row.stage_realized[t]));
    }
  }
  log << fmt::format("baseline {:.6g}; {} disturbed runs\n", base, study.rows.size());
  write_all({summary, steps}, "perturb", c, opt.out_dir, log);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bilevel scheduling of coupled microgrids with ADMM and surrogate lower levels", "mgopt"};
  app.require_subcommand(1);
  CommandOptions opt;
  std::string solver;
  std::uint64_t seed = 0;
  int stride = 0;
  std::vector<int> p;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "configuration file (default: the committed scenario)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "seed for battery draws and synthetic data");
  };
  auto* gen = app.add_subcommand("gen-data", "write synthetic household data");
  auto* sim = app.add_subcommand("simulate", "run the MPC closed loop with one lower-level solver");
  auto* train = app.add_subcommand("train", "collect samples and fit a surrogate");
  auto* cmp = app.add_subcommand("compare", "closed-loop comparison of none, admm, rbf and nn");
  auto* pert = app.add_subcommand("perturb", "closed loop with disturbed ADMM outputs");
  for (auto* sub : {gen, sim, train, cmp, pert}) common(sub);
  sim->add_option("--solver", solver, "none, admm, rbf or nn")->check(CLI::IsMember({"none", "admm", "rbf", "nn"}));
  train->add_option("--solver", solver, "rbf or nn")->check(CLI::IsMember({"rbf", "nn"}));
  train->add_option("--stride", stride, "keep every n-th sample")->check(CLI::PositiveNumber);
  pert->add_option("--p", p, "noise exponents, comma separated")->delimiter(',')->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) opt.seed = seed;
  if (!solver.empty()) opt.solver = solver_from_string(solver);
  if (chosen == train && chosen->count("--stride")) opt.stride = stride;
  if (chosen == pert && chosen->count("--p")) opt.p_values = p;

  try {
    if (chosen == gen) cmd_gen_data(opt, out);
    if (chosen == sim) cmd_simulate(opt, out);
    if (chosen == train) cmd_train(opt, out);
    if (chosen == cmp) cmd_compare(opt, out);
    if (chosen == pert) cmd_perturb(opt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return kExitOk;
}

}  // namespace mgopt
