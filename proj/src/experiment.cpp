#include "gridstate/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

bool is_pmu(MeasurementClass kind) {
  return kind == MeasurementClass::PmuVr || kind == MeasurementClass::PmuVi ||
         kind == MeasurementClass::PmuIr || kind == MeasurementClass::PmuIi;
}

}  // namespace

Scenario make_scenario(PowerNetwork net, AreaPartition part, MeasurementPlan plan,
                       SigmaTable sigmas, PowerflowOptions powerflow) {
  Scenario s;
  const PowerflowResult pf = run_powerflow(net, powerflow);
  s.truth = pf.state;
  s.powerflow_iterations = pf.iterations;
  const MeasurementSet rows = expand_plan(net, plan, sigmas);
  for (const Measurement& m : rows.items)
    (is_pmu(m.kind) ? s.pmu_rows : s.scada_rows).items.push_back(m);
  s.net = std::move(net);
  s.part = std::move(part);
  s.plan = std::move(plan);
  s.sigmas = sigmas;
  return s;
}

TrialInput draw_trial(const Scenario& s, std::uint64_t seed, double noise_scale) {
  MeasurementSet rows = s.scada_rows;
  rows.append(s.pmu_rows);
  const MeasurementSet noisy = synthesize(s.net, s.truth, rows, seed, noise_scale);
  TrialInput out;
  out.seed = seed;
  const std::size_t split = s.scada_rows.size();
  for (std::size_t i = 0; i < noisy.size(); ++i)
    (i < split ? out.scada : out.pmu).items.push_back(noisy.items[i]);
  return out;
}

GlobalResult run_method(const Scenario& s, const MethodSpec& method,
                        const TrialInput& trial) {
  PipelineOptions options = method.options;
  if (!options.uncertainty.zero() && !options.perturbation_seed)
    options.perturbation_seed = trial.seed;
  if (method.scope == MethodSpec::Scope::Central)
    return run_central(s.net, trial.scada, trial.pmu, s.net.slack_bus(), options);
  return run_two_level(s.net, s.part, trial.scada, trial.pmu, options);
}

double mean_error(const BusErrors& e) {
  if (e.buses.empty()) return 0.0;
  return (e.dv.sum() + e.dtheta.sum()) / static_cast<double>(e.buses.size());
}

MonteCarloSummary monte_carlo(const Scenario& s, const std::vector<MethodSpec>& methods,
                              int trials, std::uint64_t seed) {
  if (trials < 1) throw DomainError("trial count must be at least 1");
  MonteCarloSummary out;
  out.trials = trials;
  for (const Bus& bus : s.net.buses()) out.buses.push_back(bus.id);
  const auto n = static_cast<Eigen::Index>(out.buses.size());
  for (const MethodSpec& m : methods) {
    out.labels.push_back(m.label);
    out.mean_dv.push_back(Eigen::VectorXd::Zero(n));
    out.mean_dtheta.push_back(Eigen::VectorXd::Zero(n));
    out.trial_error.push_back(Eigen::VectorXd::Zero(trials));
  }
  for (int t = 0; t < trials; ++t) {
    const TrialInput trial = draw_trial(s, seed + static_cast<std::uint64_t>(t));
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const GlobalResult g = run_method(s, methods[k], trial);
      const BusErrors e = compute_errors(g.estimate, s.truth);
      out.mean_dv[k] += e.dv / trials;
      out.mean_dtheta[k] += e.dtheta / trials;
      out.trial_error[k](t) = mean_error(e);
    }
  }
  return out;
}

double win_rate(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() == 0)
    throw DomainError("win rate needs two equal, non-empty series");
  return static_cast<double>((a.array() <= b.array()).count()) /
         static_cast<double>(a.size());
}

PmuBusComparison compare_hybrid_to_tse(const Scenario& s,
                                       const PipelineOptions& options, int trials,
                                       std::uint64_t seed) {
  if (trials < 1) throw DomainError("trial count must be at least 1");
  PmuBusComparison out;
  out.trials = trials;
  out.pmu_buses = s.plan.pmus;
  std::sort(out.pmu_buses.begin(), out.pmu_buses.end());
  double tse = 0.0;
  double hybrid = 0.0;
  std::size_t samples = 0;
  for (int t = 0; t < trials; ++t) {
    const TrialInput trial = draw_trial(s, seed + static_cast<std::uint64_t>(t));
    const std::vector<AreaMeasurements> areas =
        split_measurements(s.net, s.part, trial.scada, trial.pmu);
    const std::vector<LocalResult> locals = level1_run(s.net, s.part, areas, options);
    for (int bus : out.pmu_buses) {
      const LocalResult& l = locals[s.part.area_of(bus)];
      const double truth = s.truth.first(s.truth.index_of(bus));
      tse += std::abs(l.tse.estimate.first(l.tse.estimate.index_of(bus)) - truth);
      hybrid += std::abs(l.estimate.first(l.estimate.index_of(bus)) - truth);
      ++samples;
    }
  }
  if (samples > 0) {
    out.tse_mean_dv = tse / static_cast<double>(samples);
    out.hybrid_mean_dv = hybrid / static_cast<double>(samples);
  }
  return out;
}

}  // namespace gridstate
