#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/bdu.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/netmodel.hpp"
#include "gridstate/state.hpp"
#include "gridstate/wls.hpp"

namespace gridstate {

struct HybridOptions {
  /// Keep only the diagonal of the converted TSE covariance.
  bool diagonal_tse_covariance = false;
  /// Lower bound for zero diagonal entries of the TSE block (the pinned
  /// reference angle leaves V_I of the reference bus with zero variance).
  double variance_floor = 1e-12;
};

/// Linear model z = Hx + e over x = [V_R; V_I] of `layout`, with rows
/// [V_R,TSE; V_I,TSE; PMU rows in measurement order] and covariance W.
struct HybridModel {
  std::vector<int> layout;
  /// Frame of the solution; the network slack once aligned to PMU time.
  int reference_bus = 0;
  /// Angle added to the TSE estimate by the frame alignment (0 if none).
  double frame_shift = 0.0;
  Eigen::VectorXd z;
  Eigen::MatrixXd H;
  Eigen::MatrixXd W;
  Eigen::Index tse_rows = 0;
  Eigen::Index pmu_rows = 0;
};

/// Stacks a polar TSE estimate (converted to rectangular with its
/// covariance) and PMU measurements. When the estimate is referenced to a
/// local bus rather than the network slack and a PMU voltage phasor is
/// available, the estimate is first rotated onto the PMU angle at the
/// reference bus (or the lowest-id PMU bus) and the rotation's uncertainty
/// is added to the angle block.
///
/// `fixed` supplies known phasors (rectangular) of buses outside the layout;
/// PMU current rows that reach them move those terms into z.
HybridModel build_hybrid_model(const StateVector& tse_estimate,
                               const Eigen::MatrixXd& tse_covariance,
                               const MeasurementSet& pmu, const PowerNetwork& net,
                               const HybridOptions& options = {},
                               const std::map<int, Complex>& fixed = {});

/// As above; throws PreconditionError when the TSE did not converge.
HybridModel build_hybrid_model(const EstimationResult& tse,
                               const MeasurementSet& pmu, const PowerNetwork& net,
                               const HybridOptions& options = {},
                               const std::map<int, Complex>& fixed = {});

/// W⁻¹.
Eigen::MatrixXd hybrid_weight(const HybridModel& m);

/// One-shot (HᵀW⁻¹H)⁻¹HᵀW⁻¹z as a rectangular state; RankError if singular.
StateVector hybrid_solve(const HybridModel& m);

/// (HᵀW⁻¹H)⁻¹ over [V_R; V_I].
Eigen::MatrixXd hybrid_covariance(const HybridModel& m);

/// bdu_solve with R = W⁻¹.
RobustSolution hybrid_solve_robust(const HybridModel& m,
                                   const UncertaintyStructure& u,
                                   LambdaStrategy strategy);

/// S = s0 times the selector of the PMU rows, E_h = e0·I, E_z = ez0·1.
UncertaintyStructure pmu_uncertainty(const HybridModel& m, double s0, double e0,
                                     double ez0 = 0.0);

/// Wraps a solution vector [V_R; V_I] as a state over the model layout.
StateVector hybrid_state(const HybridModel& m, const Eigen::VectorXd& x);

}  // namespace gridstate
