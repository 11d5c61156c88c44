#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/netmodel.hpp"
#include "gridstate/state.hpp"

namespace gridstate {

enum class MeasurementClass {
  PInjection,
  QInjection,
  PFlow,
  QFlow,
  VMagnitude,  ///< SCADA voltage magnitude
  PmuVr,
  PmuVi,
  PmuIr,
  PmuIi,
  PseudoVm,  ///< previously estimated voltage magnitude
  PseudoVa,  ///< previously estimated voltage angle
};

std::string_view to_string(MeasurementClass kind);

struct Measurement {
  MeasurementClass kind = MeasurementClass::PInjection;
  /// Bus of an injection, voltage phasor or pseudo-state; the metered end of
  /// a flow or current.
  int bus = 0;
  /// Branch index for flows and currents.
  std::optional<std::size_t> branch;
  double value = 0.0;
  double sigma = 1.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

bool is_flow_like(MeasurementClass kind);

/// Ordered measurements. The order fixes the rows of z and H.
struct MeasurementSet {
  std::vector<Measurement> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  Eigen::VectorXd values() const;
  Eigen::VectorXd variances() const;
  /// W = diag(σ²).
  Eigen::MatrixXd covariance() const;
  std::vector<int> metered_buses() const;
  MeasurementSet subset(const std::vector<std::size_t>& rows) const;
  void append(const MeasurementSet& other);

  friend bool operator==(const MeasurementSet&, const MeasurementSet&) = default;
};

/// Measurements grouped by owning area (see boundary_measurement_ownership).
std::vector<MeasurementSet> split_by_area(const PowerNetwork& net,
                                          const AreaPartition& part,
                                          const MeasurementSet& set);

/// Measurement equations h(x) and their Jacobian for a fixed measurement set
/// and a fixed bus layout. Columns of the Jacobian follow the stacked state
/// order: [V; θ] in polar form, [V_R; V_I] in rectangular form.
class MeasurementFunctions {
 public:
  /// Throws ReferenceError when a measurement needs a bus that is not in
  /// `layout` (for instance an injection at a bus whose neighbour is absent).
  MeasurementFunctions(const PowerNetwork& net, const MeasurementSet& set,
                       std::vector<int> layout);

  const std::vector<int>& layout() const { return layout_; }
  std::size_t rows() const { return terms_.size(); }

  Eigen::VectorXd evaluate(const StateVector& state) const;
  Eigen::MatrixXd jacobian(const StateVector& state) const;

  /// For current and voltage phasor rows: the constant coefficients a, b
  /// with value = a·[V_R; V_I] (the relation is linear in rectangular form).
  /// Throws PreconditionError for any other class.
  Eigen::RowVectorXd linear_row(std::size_t row) const;

 private:
  struct Term {
    Eigen::Index bus;  // layout position
    Complex coefficient;
  };
  struct Row {
    MeasurementClass kind;
    Eigen::Index bus;          // layout position of the metered bus
    std::vector<Term> terms;   // I = Σ coefficient · V_bus
  };

  Eigen::VectorXcd phasors(const StateVector& state) const;

  std::vector<int> layout_;
  std::vector<Row> terms_;
};

/// Convenience wrappers over MeasurementFunctions using the state's layout.
Eigen::VectorXd h_eval(const StateVector& state, const MeasurementSet& set,
                       const PowerNetwork& net);
Eigen::MatrixXd jacobian(const StateVector& state, const MeasurementSet& set,
                         const PowerNetwork& net);

struct FlowSite {
  int from = 0;
  int to = 0;
  int side = 0;  ///< bus id of the metered end

  friend bool operator==(const FlowSite&, const FlowSite&) = default;
};

struct MeasurementPlan {
  std::vector<int> injections;
  std::vector<FlowSite> flows;
  std::vector<int> voltages;
  std::vector<int> pmus;

  friend bool operator==(const MeasurementPlan&, const MeasurementPlan&) = default;
};

struct SigmaTable {
  double injection = 0.01;
  double flow = 0.008;
  double pmu = 0.001;
  double voltage = 0.01;
};

/// Index of the branch joining `a` and `b` (either orientation, first match).
std::size_t find_branch(const PowerNetwork& net, int a, int b);

/// Expands a plan into measurement rows (values zero, sigmas from `sigmas`).
/// Per injection: P, Q. Per flow: P, Q at the metered side. Per voltage
/// meter: |V|. Per PMU: V_R,
/// V_I, then I_R, I_I for each incident branch in branch order.
MeasurementSet expand_plan(const PowerNetwork& net, const MeasurementPlan& plan,
                           const SigmaTable& sigmas);

/// value = h(true state) + noise_scale·N(0, σ²), deterministic in `seed`.
MeasurementSet synthesize(const PowerNetwork& net, const StateVector& truth,
                          const MeasurementPlan& plan, const SigmaTable& sigmas,
                          std::uint64_t seed, double noise_scale = 1.0);

/// Adds noise_scale·N(0, σ²) to h(truth) for an already expanded set.
MeasurementSet synthesize(const PowerNetwork& net, const StateVector& truth,
                          const MeasurementSet& rows, std::uint64_t seed,
                          double noise_scale = 1.0);

struct ConvertedState {
  StateVector state;
  std::optional<Eigen::MatrixXd> covariance;
};

/// (V, θ) -> (V cos θ, V sin θ); covariance transported as J C Jᵀ.
ConvertedState polar_to_rect(const StateVector& state,
                             const std::optional<Eigen::MatrixXd>& covariance = {});
/// Inverse conversion, covariance transported with the inverse Jacobian.
ConvertedState rect_to_polar(const StateVector& state,
                             const std::optional<Eigen::MatrixXd>& covariance = {});

/// Jacobian of (V_R, V_I) w.r.t. (V, θ) in stacked order.
Eigen::MatrixXd polar_to_rect_jacobian(const StateVector& polar);

}  // namespace gridstate
