#include "mgopt/bilevel.hpp"

#include <chrono>

#include <fmt/format.h>
#include <tbb/parallel_for.h>

namespace mgopt {

AdmmLowerSolver::AdmmLowerSolver(AdmmConfig cfg, double T) : cfg_(cfg), T_(T) {
  validate(cfg_);
  if (!(T > 0.0)) throw DomainError("AdmmLowerSolver: T must be > 0");
}

LowerResponse AdmmLowerSolver::solve(const Microgrid& mg, const Eigen::VectorXd& x0, const Eigen::MatrixXd& w,
                                     const Profile& target) {
  const AdmmState* warm = cfg_.warm_start && warm_ ? &*warm_ : nullptr;
  last_ = solve_lower_level(mg, x0, w, target, cfg_, T_, warm);
  if (cfg_.warm_start) warm_ = last_.state;
  return LowerResponse{last_.z_bar, last_.controls, last_.transmissions};
}

void validate(const BilevelConfig& cfg) {
  if (cfg.j_max < 1) throw DomainError("bilevel j_max must be >= 1");
  if (!(cfg.eps > 0.0)) throw DomainError("bilevel eps must be > 0");
}

std::vector<int> BilevelInput::sizes() const {
  std::vector<int> s;
  for (const auto& mg : *microgrids) s.push_back(mg.size());
  return s;
}

Profile updated_reference(const Profile& zeta, const Profile& z_bar, const Profile& z_bar_plus) {
  if (zeta.size() != z_bar.size() || zeta.size() != z_bar_plus.size()) {
    throw DomainError("updated_reference: profile lengths differ");
  }
  return zeta + (z_bar - z_bar_plus);
}

namespace {

void check_input(const BilevelInput& in, std::size_t solvers) {
  if (!in.microgrids || !in.topology) throw DomainError("bilevel: microgrids and topology are required");
  const auto xi = in.microgrids->size();
  if (static_cast<std::size_t>(in.topology->xi()) != xi || in.x0.size() != xi || in.w.size() != xi ||
      solvers != xi) {
    throw DomainError(fmt::format("bilevel: expected {} microgrids in every argument", xi));
  }
  for (std::size_t k = 0; k < xi; ++k) {
    const int I = (*in.microgrids)[k].size();
    if (in.x0[k].size() != I || in.w[k].rows() != I || in.w[k].cols() != in.zeta.size()) {
      throw DomainError(fmt::format("bilevel: microgrid {} has inconsistent SoC or forecast shape", k));
    }
  }
}

}  // namespace

BilevelIterate bidirectional_step(const BilevelInput& in, const std::vector<Profile>& targets,
                                  const std::vector<LowerSolver*>& lower, const ExchangeTensor& previous_delta,
                                  const ExchangeConfig& xcfg, BilevelTrace& trace) {
  check_input(in, lower.size());
  const int xi = static_cast<int>(in.microgrids->size());
  const auto N = in.zeta.size();
  if (trace.lower_seconds.size() != static_cast<std::size_t>(xi)) trace.lower_seconds.resize(xi);
  if (trace.transmissions_per_mg.size() != static_cast<std::size_t>(xi)) trace.transmissions_per_mg.assign(xi, 0);

  std::vector<LowerResponse> responses(xi);
  std::vector<double> seconds(xi);
  tbb::parallel_for(0, xi, [&](int k) {
    const auto t0 = std::chrono::steady_clock::now();
    responses[k] = lower[k]->solve((*in.microgrids)[k], in.x0[k], in.w[k], targets[k]);
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  BilevelIterate it;
  it.z_bar.resize(xi, N);
  it.targets = targets;
  it.controls.resize(xi);
  for (int k = 0; k < xi; ++k) {
    if (responses[k].z_bar.size() != N || !responses[k].z_bar.allFinite()) {
      throw SolverError(fmt::format("lower-level solver '{}' returned an invalid profile for microgrid {}",
                                    lower[k]->name(), k));
    }
    it.z_bar.row(k) = responses[k].z_bar.transpose();
    it.controls[k] = std::move(responses[k].controls);
    trace.lower_seconds[k].push_back(seconds[k]);
    trace.transmissions_per_mg[k] += responses[k].transmissions;
    trace.transmissions += responses[k].transmissions;
  }

  const auto sizes = in.sizes();
  it.pre_cost = upper_cost(it.z_bar, previous_delta, *in.topology, in.zeta, sizes);
  auto ex = solve_exchange(it.z_bar, *in.topology, in.zeta, sizes, xcfg);
  for (std::size_t n = 0; n < ex.fallback.size(); ++n)
    if (ex.fallback[n]) trace.exchange_fallbacks.push_back(static_cast<int>(n));
  it.delta = std::move(ex.delta);
  it.post_cost = ex.cost;
  return it;
}

std::vector<Profile> next_targets(const BilevelInput& in, const BilevelIterate& it) {
  const Eigen::MatrixXd plus = apply_exchange(it.z_bar, it.delta, *in.topology, in.sizes());
  std::vector<Profile> targets;
  for (int k = 0; k < it.z_bar.rows(); ++k) {
    targets.push_back(updated_reference(in.zeta, it.z_bar.row(k).transpose(), plus.row(k).transpose()));
  }
  return targets;
}

BilevelResult run_bidirectional(const BilevelInput& in, const std::vector<LowerSolver*>& lower,
                                const BilevelConfig& cfg, const ExchangeConfig& xcfg) {
  validate(cfg);
  check_input(in, lower.size());
  const int xi = static_cast<int>(in.microgrids->size());
  for (auto* s : lower) s->reset();

  auto result = std::make_shared<BilevelResult>();
  BilevelTrace& trace = result->trace;
  auto record = [&](BilevelIterate it) {
    trace.pre_costs.push_back(it.pre_cost);
    trace.post_costs.push_back(it.post_cost);
    ++trace.iterations;
    if (trace.iterations == 1 || it.post_cost < result->best.post_cost) {
      result->best = it;
      trace.best_iteration = trace.iterations;
    }
    result->last = std::move(it);
  };
  auto step = [&](const std::vector<Profile>& targets, const ExchangeTensor& prev) {
    try {
      return bidirectional_step(in, targets, lower, prev, xcfg, trace);
    } catch (const Error& e) {
      auto partial = trace.iterations > 0 ? std::shared_ptr<const BilevelResult>(result) : nullptr;
      throw BilevelError(fmt::format("bidirectional iteration {} failed: {}", trace.iterations + 1, e.what()),
                         partial);
    }
  };

  record(step(std::vector<Profile>(xi, in.zeta), ExchangeTensor::identity(xi, static_cast<int>(in.zeta.size()))));
  if (result->last.post_cost <= cfg.eps) return std::move(*result);

  while (trace.iterations < cfg.j_max) {
    const double previous = result->last.post_cost;
    const ExchangeTensor prev_delta = result->last.delta;
    record(step(next_targets(in, result->last), prev_delta));
    if (previous - result->last.post_cost <= cfg.eps) break;
  }
  return std::move(*result);
}

}  // namespace mgopt
