#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/measurement.hpp"
#include "gridstate/netmodel.hpp"
#include "gridstate/state.hpp"

namespace gridstate {

struct WlsOptions {
  double tolerance = 1e-6;  ///< ε on max |Δx| per component
  int max_iterations = 20;  ///< k_limit
};

/// A measurement model over a plain parameter vector.
struct NonlinearModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

struct GaussNewtonResult {
  Eigen::VectorXd x;
  Eigen::MatrixXd gain_inverse;  ///< (HᵀW⁻¹H)⁻¹ at x
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  Eigen::VectorXd residuals;     ///< z - h(x)
};

/// Gauss-Newton on J(x) = (z - h(x))ᵀ W⁻¹ (z - h(x)). W may be any symmetric
/// positive-definite covariance; it is whitened with its Cholesky factor.
/// Throws UnobservableError when the gain matrix is singular.
GaussNewtonResult gauss_newton(const NonlinearModel& model,
                               const Eigen::VectorXd& z,
                               const Eigen::MatrixXd& covariance,
                               Eigen::VectorXd x0, WlsOptions options = {});

/// Inverse of HᵀW⁻¹H, or UnobservableError when it is singular.
Eigen::MatrixXd inverse_gain(const Eigen::MatrixXd& H,
                             const Eigen::MatrixXd& covariance);

struct EstimationResult {
  StateVector estimate;         ///< polar
  /// Covariance over [V; θ] of the whole layout. The pinned reference angle
  /// is not estimated, so its row and column are zero.
  Eigen::MatrixXd covariance;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  Eigen::VectorXd residuals;
};

/// J(x) for a measurement set at a polar or rectangular state.
double objective(const MeasurementSet& set, const MeasurementFunctions& model,
                 const StateVector& state);

/// Nonlinear WLS from `init` (polar). The angle of init.reference_bus is
/// pinned when that bus is part of the layout.
EstimationResult wls_estimate(const MeasurementSet& set,
                              const MeasurementFunctions& model,
                              const StateVector& init, WlsOptions options = {});

/// Traditional estimate over `layout` from a flat start, referenced to
/// `reference_bus`.
EstimationResult estimate_state(const PowerNetwork& net,
                                const MeasurementSet& set,
                                const std::vector<int>& layout,
                                int reference_bus, WlsOptions options = {});

}  // namespace gridstate
