#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridstate/netmodel.hpp"
#include "gridstate/state.hpp"

namespace gridstate {

struct PowerflowOptions {
  double tolerance = 1e-8;  ///< bound on max |ΔP|, |ΔQ| in p.u.
  int max_iterations = 10;
};

struct PowerflowResult {
  StateVector state;  ///< polar, network bus order, referenced to the slack
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Full Newton-Raphson in polar coordinates from a flat start (slack and PV
/// magnitudes at their set points). Throws DivergenceError if the mismatch
/// is not below tolerance within max_iterations.
PowerflowResult run_powerflow(const PowerNetwork& net,
                              PowerflowOptions options = {});

struct BusMismatch {
  Eigen::VectorXd dp;  ///< P_scheduled - P_calculated per bus (network order)
  Eigen::VectorXd dq;
};

/// Evaluates the injection mismatch bus by bus from G and B. Kept free of the
/// solver's complex-matrix path so it can serve as an independent check.
BusMismatch mismatch(const PowerNetwork& net, const StateVector& state);

/// Largest |ΔP| over non-slack buses and |ΔQ| over load buses.
double max_mismatch(const PowerNetwork& net, const StateVector& state);

/// Reduced Newton system at `state`: the residual stacks ΔP of non-slack
/// buses then ΔQ of load buses (calculated minus scheduled); the Jacobian is
/// taken w.r.t. [θ of non-slack buses, V of load buses].
struct PowerflowSystem {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
};

PowerflowSystem powerflow_system(const PowerNetwork& net,
                                 const AdmittanceMatrix& ybus,
                                 const StateVector& state);

}  // namespace gridstate
