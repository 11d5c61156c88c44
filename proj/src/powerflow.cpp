#include "gridstate/powerflow.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

struct Unknowns {
  std::vector<Eigen::Index> angle;      // non-slack buses
  std::vector<Eigen::Index> magnitude;  // load buses
};

Unknowns unknowns_of(const PowerNetwork& net) {
  Unknowns u;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const BusKind kind = net.buses()[i].kind;
    if (kind != BusKind::Slack) u.angle.push_back(static_cast<Eigen::Index>(i));
    if (kind == BusKind::Load) u.magnitude.push_back(static_cast<Eigen::Index>(i));
  }
  return u;
}

Eigen::VectorXcd voltages(const StateVector& s) {
  Eigen::VectorXcd v(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) v(i) = s.phasor(i);
  return v;
}

}  // namespace

PowerflowSystem powerflow_system(const PowerNetwork& net,
                                 const AdmittanceMatrix& ybus,
                                 const StateVector& state) {
  const Unknowns u = unknowns_of(net);
  const Eigen::VectorXcd v = voltages(state);
  const Eigen::VectorXcd current = ybus.Y * v;
  const Eigen::Index n = v.size();

  Eigen::VectorXcd scheduled(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    scheduled(i) = Complex(net.p_scheduled(k), net.q_scheduled(k));
  }
  const Eigen::VectorXcd calculated = v.cwiseProduct(current.conjugate());
  const Eigen::VectorXcd diff = calculated - scheduled;

  // dS/dθ = j diag(V) conj(diag(I) - Y diag(V));
  // dS/d|V| = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
  const Eigen::VectorXcd unit = v.cwiseQuotient(v.cwiseAbs().cast<Complex>());
  Eigen::MatrixXcd ds_dva = -(ybus.Y * v.asDiagonal()).conjugate();
  ds_dva.diagonal() += current.conjugate();
  ds_dva = (Complex(0.0, 1.0) * v).asDiagonal() * ds_dva;
  Eigen::MatrixXcd ds_dvm =
      v.asDiagonal() * (ybus.Y * unit.asDiagonal()).conjugate();
  ds_dvm.diagonal() += current.conjugate().cwiseProduct(unit);

  const auto na = static_cast<Eigen::Index>(u.angle.size());
  const auto nm = static_cast<Eigen::Index>(u.magnitude.size());
  PowerflowSystem sys;
  sys.residual.resize(na + nm);
  sys.jacobian.resize(na + nm, na + nm);
  for (Eigen::Index r = 0; r < na; ++r) {
    const Eigen::Index i = u.angle[static_cast<std::size_t>(r)];
    sys.residual(r) = diff(i).real();
    for (Eigen::Index c = 0; c < na; ++c)
      sys.jacobian(r, c) = ds_dva(i, u.angle[static_cast<std::size_t>(c)]).real();
    for (Eigen::Index c = 0; c < nm; ++c)
      sys.jacobian(r, na + c) =
          ds_dvm(i, u.magnitude[static_cast<std::size_t>(c)]).real();
  }
  for (Eigen::Index r = 0; r < nm; ++r) {
    const Eigen::Index i = u.magnitude[static_cast<std::size_t>(r)];
    sys.residual(na + r) = diff(i).imag();
    for (Eigen::Index c = 0; c < na; ++c)
      sys.jacobian(na + r, c) =
          ds_dva(i, u.angle[static_cast<std::size_t>(c)]).imag();
    for (Eigen::Index c = 0; c < nm; ++c)
      sys.jacobian(na + r, na + c) =
          ds_dvm(i, u.magnitude[static_cast<std::size_t>(c)]).imag();
  }
  return sys;
}

PowerflowResult run_powerflow(const PowerNetwork& net,
                              PowerflowOptions options) {
  if (!(options.tolerance > 0.0))
    throw DomainError("power-flow tolerance must be positive");
  if (options.max_iterations < 1)
    throw DomainError("power-flow iteration cap must be at least 1");
  const AdmittanceMatrix ybus = build_ybus(net);
  const Unknowns u = unknowns_of(net);

  std::vector<int> ids;
  for (const Bus& bus : net.buses()) ids.push_back(bus.id);
  PowerflowResult result;
  result.state = StateVector::flat(std::move(ids), net.slack_bus());
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Bus& bus = net.buses()[i];
    const auto k = static_cast<Eigen::Index>(i);
    if (bus.kind != BusKind::Load) result.state.first(k) = bus.vm;
    if (bus.kind == BusKind::Slack) result.state.second(k) = bus.va;
  }

  StateVector& s = result.state;
  for (int iter = 0;; ++iter) {
    const PowerflowSystem sys = powerflow_system(net, ybus, s);
    result.max_mismatch = sys.residual.size() ? sys.residual.cwiseAbs().maxCoeff() : 0.0;
    result.iterations = iter;
    spdlog::debug("power flow iteration {}: max mismatch {:.3e}", iter,
                  result.max_mismatch);
    if (result.max_mismatch < options.tolerance) return result;
    if (iter >= options.max_iterations)
      throw DivergenceError(
          fmt::format("power flow did not converge in {} iterations "
                      "(max mismatch {:.3e})",
                      options.max_iterations, result.max_mismatch),
          result.max_mismatch);

    const Eigen::VectorXd step = sys.jacobian.partialPivLu().solve(-sys.residual);
    if (!step.allFinite())
      throw DivergenceError("power-flow Jacobian is singular", result.max_mismatch);
    const auto na = static_cast<Eigen::Index>(u.angle.size());
    for (Eigen::Index c = 0; c < na; ++c)
      s.second(u.angle[static_cast<std::size_t>(c)]) += step(c);
    for (std::size_t c = 0; c < u.magnitude.size(); ++c)
      s.first(u.magnitude[c]) += step(na + static_cast<Eigen::Index>(c));
  }
}

BusMismatch mismatch(const PowerNetwork& net, const StateVector& state) {
  const AdmittanceMatrix ybus = build_ybus(net, {.require_connected = false});
  const auto n = static_cast<Eigen::Index>(net.size());
  if (state.size() != n)
    throw ReferenceError("state does not cover the network");
  Eigen::VectorXd vm(n), va(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k =
        state.index_of(net.buses()[static_cast<std::size_t>(i)].id);
    const Complex v = state.phasor(k);
    vm(i) = std::abs(v);
    va(i) = std::arg(v);
  }
  BusMismatch out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 0.0;
    double q = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double angle = va(i) - va(j);
      const double g = ybus.G(i, j);
      const double b = ybus.B(i, j);
      p += vm(j) * (g * std::cos(angle) + b * std::sin(angle));
      q += vm(j) * (g * std::sin(angle) - b * std::cos(angle));
    }
    const auto k = static_cast<std::size_t>(i);
    out.dp(i) = net.p_scheduled(k) - vm(i) * p;
    out.dq(i) = net.q_scheduled(k) - vm(i) * q;
  }
  return out;
}

double max_mismatch(const PowerNetwork& net, const StateVector& state) {
  const BusMismatch m = mismatch(net, state);
  double worst = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const BusKind kind = net.buses()[i].kind;
    const auto k = static_cast<Eigen::Index>(i);
    if (kind != BusKind::Slack) worst = std::max(worst, std::abs(m.dp(k)));
    if (kind == BusKind::Load) worst = std::max(worst, std::abs(m.dq(k)));
  }
  return worst;
}

}  // namespace gridstate
