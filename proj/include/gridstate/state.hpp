#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace gridstate {

enum class Coordinates { Polar, Rectangular };

/// Per-bus voltage state. In polar form `first` holds magnitudes (p.u.) and
/// `second` angles (rad); in rectangular form they hold V_R and V_I.
/// Covariance matrices over a state use the stacked order [first; second].
///
/// `reference_bus` names the bus whose angle defines zero for this state. It
/// need not be in `buses`: an estimate aligned to phasor-measurement time is
/// referenced to the network slack like the load-flow solution itself.
struct StateVector {
  Coordinates coordinates = Coordinates::Polar;
  std::vector<int> buses;
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  int reference_bus = 0;

  static StateVector flat(std::vector<int> buses, int reference_bus);

  Eigen::Index size() const { return static_cast<Eigen::Index>(buses.size()); }
  /// Position of `bus` in the layout; throws ReferenceError when absent.
  Eigen::Index index_of(int bus) const;
  bool contains(int bus) const;

  std::complex<double> phasor(Eigen::Index i) const;
  /// Sub-state over `subset` (in the given order).
  StateVector restricted(const std::vector<int>& subset) const;
};

}  // namespace gridstate
