#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/bdu.hpp"
#include "gridstate/hybrid.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/netmodel.hpp"
#include "gridstate/state.hpp"
#include "gridstate/wls.hpp"

namespace gridstate {

struct UncertaintyScales {
  double s0 = 0.0;  ///< scale of S on the PMU rows
  double e0 = 0.0;  ///< E_h = e0·I
  double ez0 = 0.0; ///< E_z = ez0·1

  bool zero() const { return s0 == 0.0 && (e0 == 0.0 && ez0 == 0.0); }
};

struct PipelineOptions {
  WlsOptions wls;
  HybridOptions hybrid;
  bool robust = true;
  LambdaStrategy lambda = LambdaStrategy::approx(1.0);
  UncertaintyScales uncertainty;
  /// When set, every hybrid model is perturbed by S Δ [E_h E_z] with a
  /// unit-norm Δ drawn from this seed and the model's scope (area index, or
  /// the area count for the coordinator), before either solver sees it.
  std::optional<std::uint64_t> perturbation_seed;
  /// Feed the boundary measurements to the coordinator as well.
  bool reuse_boundary_measurements = true;
  bool parallel = true;
};

struct LocalResult {
  std::size_t area = 0;           ///< position in AreaPartition::areas
  EstimationResult tse;
  StateVector estimate;           ///< polar, over the area layout
  /// Covariance over [V; θ] of the layout: the weighted LS covariance of the
  /// hybrid model, transported to polar form.
  Eigen::MatrixXd covariance;
  double lambda = 0.0;
  /// Boundary then external buses, with the matching covariance block.
  StateVector pseudo;
  Eigen::MatrixXd pseudo_covariance;
};

struct CoordinatorResult {
  GaussNewtonResult nonlinear;    ///< over [θ_bnd; V_bnd; u_2..u_r]
  StateVector nonlinear_estimate; ///< polar, boundary buses
  StateVector estimate;           ///< polar, after the hybrid step
  Eigen::VectorXd offsets;        ///< u per area, u(0) = 0
  double lambda = 0.0;
};

struct GlobalResult {
  std::string method;             ///< "robust" or "non-robust"
  StateVector estimate;           ///< polar, network bus order
  std::vector<LocalResult> locals;
  std::optional<CoordinatorResult> coordinator;
};

/// Per-area measurements: SCADA rows owned by the area and PMU rows taken
/// at its buses.
struct AreaMeasurements {
  MeasurementSet scada;
  MeasurementSet pmu;
};

std::vector<AreaMeasurements> split_measurements(const PowerNetwork& net,
                                                 const AreaPartition& part,
                                                 const MeasurementSet& scada,
                                                 const MeasurementSet& pmu);

/// Boundary measurements for the coordinator: injections at boundary buses
/// and flows on tie-lines.
MeasurementSet boundary_measurements(const PowerNetwork& net,
                                     const AreaPartition& part,
                                     const MeasurementSet& scada);

/// Phasor rows taken at boundary buses.
MeasurementSet boundary_pmus(const AreaPartition& part, const MeasurementSet& pmu);

/// Level 1: TSE, hybrid stacking, robust (or plain) solve, back to polar, per
/// area. Areas run concurrently when options.parallel is set; results are in
/// area order either way. Failures of individual areas are collected and
/// reported together.
std::vector<LocalResult> level1_run(const PowerNetwork& net,
                                    const AreaPartition& part,
                                    const std::vector<AreaMeasurements>& areas,
                                    const PipelineOptions& options);

/// Level 2: nonlinear coordinator over boundary states and area offsets,
/// then the coordinator hybrid step; assembles the network-wide estimate.
GlobalResult level2_run(const PowerNetwork& net, const AreaPartition& part,
                        std::vector<LocalResult> locals,
                        const MeasurementSet& boundary,
                        const MeasurementSet& coordinator_pmu,
                        const PipelineOptions& options);

/// Both levels; with a single area the coordinator is skipped.
GlobalResult run_two_level(const PowerNetwork& net, const AreaPartition& part,
                           const MeasurementSet& scada, const MeasurementSet& pmu,
                           const PipelineOptions& options);

/// One area covering the whole network, referenced to `reference_bus`.
GlobalResult run_central(const PowerNetwork& net, const MeasurementSet& scada,
                         const MeasurementSet& pmu, int reference_bus,
                         const PipelineOptions& options);

struct BusErrors {
  std::vector<int> buses;
  Eigen::VectorXd dv;      ///< |ΔV|, p.u.
  Eigen::VectorXd dtheta;  ///< |Δθ|, rad, wrapped to [0, π]
};

/// Absolute errors over the estimate's buses. The truth is re-referenced to
/// the estimate's reference bus first.
BusErrors compute_errors(const StateVector& estimate, const StateVector& truth);

/// Difference a − b wrapped to (−π, π].
double wrap_angle(double a, double b);

}  // namespace gridstate
