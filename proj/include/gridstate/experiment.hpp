#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/measurement.hpp"
#include "gridstate/multiarea.hpp"
#include "gridstate/netmodel.hpp"
#include "gridstate/powerflow.hpp"

namespace gridstate {

/// A network with its load-flow truth and the expanded measurement rows.
struct Scenario {
  PowerNetwork net;
  AreaPartition part;
  MeasurementPlan plan;
  SigmaTable sigmas;
  StateVector truth;
  int powerflow_iterations = 0;
  MeasurementSet scada_rows;  ///< values unset
  MeasurementSet pmu_rows;    ///< values unset
};

Scenario make_scenario(PowerNetwork net, AreaPartition part, MeasurementPlan plan,
                       SigmaTable sigmas, PowerflowOptions powerflow = {});

struct TrialInput {
  std::uint64_t seed = 0;
  MeasurementSet scada;
  MeasurementSet pmu;
};

/// Noisy SCADA and PMU values for one trial, deterministic in `seed`.
TrialInput draw_trial(const Scenario& s, std::uint64_t seed, double noise_scale = 1.0);

struct MethodSpec {
  enum class Scope { Central, MultiArea };
  std::string label;
  Scope scope = Scope::MultiArea;
  PipelineOptions options;
};

/// Runs one method on one trial. When the method's uncertainty scales are
/// non-zero the models are perturbed with a Δ drawn from the trial seed, so
/// methods compared on the same trial see the same perturbation.
GlobalResult run_method(const Scenario& s, const MethodSpec& method,
                        const TrialInput& trial);

/// Mean over buses of |ΔV| + |Δθ|.
double mean_error(const BusErrors& e);

struct MonteCarloSummary {
  std::vector<std::string> labels;
  std::vector<int> buses;                   ///< network order
  std::vector<Eigen::VectorXd> mean_dv;     ///< per method, per bus
  std::vector<Eigen::VectorXd> mean_dtheta; ///< per method, per bus
  std::vector<Eigen::VectorXd> trial_error; ///< per method, mean_error per trial
  int trials = 0;
};

/// Trial t uses seed + t for both noise and perturbation.
MonteCarloSummary monte_carlo(const Scenario& s, const std::vector<MethodSpec>& methods,
                              int trials, std::uint64_t seed);

/// Fraction of trials in which a(t) ≤ b(t).
double win_rate(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct PmuBusComparison {
  std::vector<int> pmu_buses;
  double tse_mean_dv = 0.0;     ///< traditional estimate, mean |ΔV| on PMU buses
  double hybrid_mean_dv = 0.0;  ///< level-1 hybrid, same buses and trials
  int trials = 0;
};

/// Level-1 traditional vs hybrid estimate on the PMU-equipped buses. Voltage
/// magnitudes are compared because the traditional estimate does not
/// estimate the angle of its reference bus.
PmuBusComparison compare_hybrid_to_tse(const Scenario& s,
                                       const PipelineOptions& options, int trials,
                                       std::uint64_t seed);

}  // namespace gridstate
