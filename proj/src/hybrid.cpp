#include "gridstate/hybrid.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

struct PmuVoltage {
  double vr = 0.0;
  double vi = 0.0;
  double sigma = 0.0;
  int seen = 0;
};

std::map<int, PmuVoltage> pmu_voltages(const MeasurementSet& pmu) {
  std::map<int, PmuVoltage> out;
  for (const Measurement& m : pmu.items) {
    if (m.kind == MeasurementClass::PmuVr) {
      out[m.bus].vr = m.value;
      out[m.bus].sigma = m.sigma;
      out[m.bus].seen |= 1;
    } else if (m.kind == MeasurementClass::PmuVi) {
      out[m.bus].vi = m.value;
      out[m.bus].seen |= 2;
    }
  }
  std::erase_if(out, [](const auto& kv) { return kv.second.seen != 3; });
  return out;
}

bool is_pmu(MeasurementClass kind) {
  return kind == MeasurementClass::PmuVr || kind == MeasurementClass::PmuVi ||
         kind == MeasurementClass::PmuIr || kind == MeasurementClass::PmuIi;
}

}  // namespace

HybridModel build_hybrid_model(const StateVector& tse_estimate,
                               const Eigen::MatrixXd& tse_covariance,
                               const MeasurementSet& pmu, const PowerNetwork& net,
                               const HybridOptions& options,
                               const std::map<int, Complex>& fixed) {
  if (tse_estimate.coordinates != Coordinates::Polar)
    throw PreconditionError("the TSE estimate must be polar");
  const Eigen::Index n = tse_estimate.size();
  if (tse_covariance.rows() != 2 * n || tse_covariance.cols() != 2 * n)
    throw PreconditionError("TSE covariance does not match the estimate layout");
  for (const Measurement& m : pmu.items)
    if (!is_pmu(m.kind))
      throw PreconditionError(fmt::format("{} is not a phasor measurement",
                                          to_string(m.kind)));

  StateVector polar = tse_estimate;
  Eigen::MatrixXd cov = tse_covariance;
  double frame_shift = 0.0;

  // Align a locally referenced estimate with the PMU time frame.
  const std::map<int, PmuVoltage> voltages = pmu_voltages(pmu);
  int anchor = 0;
  for (const auto& [bus, v] : voltages) {
    if (!polar.contains(bus)) continue;
    if (bus == polar.reference_bus || anchor == 0) anchor = bus;
    if (bus == polar.reference_bus) break;
  }
  if (polar.reference_bus != net.slack_bus() && anchor != 0) {
    const PmuVoltage& v = voltages.at(anchor);
    const Eigen::Index k = polar.index_of(anchor);
    const double shift = std::atan2(v.vi, v.vr) - polar.second(k);
    polar.second.array() += shift;
    frame_shift = shift;
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2 * n, 2 * n);
    A.block(n, n + k, n, 1).array() -= 1.0;
    A(n + k, n + k) = 0.0;
    cov = A * cov * A.transpose();
    const double sigma_angle = v.sigma / std::hypot(v.vr, v.vi);
    cov.bottomRightCorner(n, n).array() += sigma_angle * sigma_angle;
    polar.reference_bus = net.slack_bus();
  }

  const ConvertedState rect = polar_to_rect(polar, cov);
  Eigen::MatrixXd w_tse = *rect.covariance;
  if (options.diagonal_tse_covariance)
    w_tse = Eigen::MatrixXd(w_tse.diagonal().asDiagonal());
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    if (w_tse(i, i) < options.variance_floor) w_tse(i, i) = options.variance_floor;

  // Phasor rows, with fixed buses appended to the column layout.
  std::vector<int> extended = polar.buses;
  std::vector<Complex> fixed_values;
  for (const auto& [bus, value] : fixed) {
    if (polar.contains(bus)) continue;
    extended.push_back(bus);
    fixed_values.push_back(value);
  }
  const MeasurementFunctions functions(net, pmu, extended);
  const auto ne = static_cast<Eigen::Index>(extended.size());
  const auto q = static_cast<Eigen::Index>(pmu.size());

  HybridModel m;
  m.layout = polar.buses;
  m.reference_bus = polar.reference_bus;
  m.frame_shift = frame_shift;
  m.tse_rows = 2 * n;
  m.pmu_rows = q;
  m.z.resize(2 * n + q);
  m.H = Eigen::MatrixXd::Zero(2 * n + q, 2 * n);
  m.W = Eigen::MatrixXd::Zero(2 * n + q, 2 * n + q);
  m.z << rect.state.first, rect.state.second, pmu.values();
  m.H.topRows(2 * n).setIdentity();
  m.W.topLeftCorner(2 * n, 2 * n) = w_tse;
  for (Eigen::Index r = 0; r < q; ++r) {
    const Eigen::RowVectorXd a = functions.linear_row(static_cast<std::size_t>(r));
    m.H.block(2 * n + r, 0, 1, n) = a.segment(0, n);
    m.H.block(2 * n + r, n, 1, n) = a.segment(ne, n);
    for (Eigen::Index f = n; f < ne; ++f) {
      const Complex v = fixed_values[static_cast<std::size_t>(f - n)];
      m.z(2 * n + r) -= a(f) * v.real() + a(ne + f) * v.imag();
    }
    const double sigma = pmu.items[static_cast<std::size_t>(r)].sigma;
    m.W(2 * n + r, 2 * n + r) = sigma * sigma;
  }
  return m;
}

HybridModel build_hybrid_model(const EstimationResult& tse,
                               const MeasurementSet& pmu, const PowerNetwork& net,
                               const HybridOptions& options,
                               const std::map<int, Complex>& fixed) {
  if (!tse.converged)
    throw PreconditionError("the traditional estimate did not converge");
  return build_hybrid_model(tse.estimate, tse.covariance, pmu, net, options, fixed);
}

Eigen::MatrixXd hybrid_weight(const HybridModel& m) {
  const Eigen::Index t = m.tse_rows;
  const Eigen::Index rows = m.W.rows();
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(rows, rows);
  Eigen::LLT<Eigen::MatrixXd> llt(m.W.topLeftCorner(t, t));
  if (llt.info() != Eigen::Success)
    throw RankError("TSE covariance block is not positive definite");
  R.topLeftCorner(t, t) = llt.solve(Eigen::MatrixXd::Identity(t, t));
  for (Eigen::Index i = t; i < rows; ++i) R(i, i) = 1.0 / m.W(i, i);
  return R;
}

StateVector hybrid_state(const HybridModel& m, const Eigen::VectorXd& x) {
  const auto n = static_cast<Eigen::Index>(m.layout.size());
  StateVector s;
  s.coordinates = Coordinates::Rectangular;
  s.buses = m.layout;
  s.reference_bus = m.reference_bus;
  s.first = x.head(n);
  s.second = x.segment(n, n);
  return s;
}

StateVector hybrid_solve(const HybridModel& m) {
  return hybrid_state(m, weighted_least_squares(m.H, hybrid_weight(m), m.z));
}

Eigen::MatrixXd hybrid_covariance(const HybridModel& m) {
  return inverse_gain(m.H, m.W);
}

RobustSolution hybrid_solve_robust(const HybridModel& m,
                                   const UncertaintyStructure& u,
                                   LambdaStrategy strategy) {
  return bdu_solve({m.z, m.H, hybrid_weight(m), u}, strategy);
}

UncertaintyStructure pmu_uncertainty(const HybridModel& m, double s0, double e0,
                                     double ez0) {
  const Eigen::Index rows = m.H.rows();
  const Eigen::Index n = m.H.cols();
  UncertaintyStructure u;
  u.S = Eigen::MatrixXd::Zero(rows, m.pmu_rows);
  for (Eigen::Index r = 0; r < m.pmu_rows; ++r) u.S(m.tse_rows + r, r) = s0;
  u.Eh = e0 * Eigen::MatrixXd::Identity(n, n);
  u.Ez = Eigen::VectorXd::Constant(n, ez0);
  return u;
}

}  // namespace gridstate
