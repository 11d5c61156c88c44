#include "gridstate/wls.hpp"

#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

constexpr double kMinReciprocalCondition = 1e-14;

Eigen::LLT<Eigen::MatrixXd> whitener(const Eigen::MatrixXd& covariance) {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw DomainError("measurement covariance is not positive definite");
  return llt;
}

Eigen::LLT<Eigen::MatrixXd> factor_gain(const Eigen::MatrixXd& gain) {
  Eigen::LLT<Eigen::MatrixXd> llt(gain);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kMinReciprocalCondition))
    throw UnobservableError(fmt::format(
        "gain matrix is singular ({} unknowns); the state is not observable",
        gain.rows()));
  return llt;
}

}  // namespace

Eigen::MatrixXd inverse_gain(const Eigen::MatrixXd& H,
                             const Eigen::MatrixXd& covariance) {
  const Eigen::LLT<Eigen::MatrixXd> w = whitener(covariance);
  const Eigen::MatrixXd A = w.matrixL().solve(H);
  const Eigen::MatrixXd gain = A.transpose() * A;
  return factor_gain(gain).solve(
      Eigen::MatrixXd::Identity(gain.rows(), gain.cols()));
}

GaussNewtonResult gauss_newton(const NonlinearModel& model,
                               const Eigen::VectorXd& z,
                               const Eigen::MatrixXd& covariance,
                               Eigen::VectorXd x0, WlsOptions options) {
  if (!(options.tolerance > 0.0))
    throw DomainError("convergence tolerance must be positive");
  if (options.max_iterations < 1)
    throw DomainError("iteration limit must be at least 1");
  if (covariance.rows() != z.size() || covariance.cols() != z.size())
    throw DomainError("covariance does not match the measurement vector");
  const Eigen::LLT<Eigen::MatrixXd> w = whitener(covariance);

  GaussNewtonResult out;
  out.x = std::move(x0);
  for (int k = 1; k <= options.max_iterations; ++k) {
    const Eigen::MatrixXd A = w.matrixL().solve(model.jacobian(out.x));
    const Eigen::VectorXd r = w.matrixL().solve(z - model.h(out.x));
    const Eigen::VectorXd step =
        factor_gain(A.transpose() * A).solve(A.transpose() * r);
    out.x += step;
    out.iterations = k;
    const double largest = step.size() ? step.cwiseAbs().maxCoeff() : 0.0;
    spdlog::debug("gauss-newton iteration {}: max |dx| {:.3e}", k, largest);
    if (largest < options.tolerance) {
      out.converged = true;
      break;
    }
  }

  const Eigen::MatrixXd A = w.matrixL().solve(model.jacobian(out.x));
  const Eigen::MatrixXd gain = A.transpose() * A;
  out.gain_inverse =
      factor_gain(gain).solve(Eigen::MatrixXd::Identity(gain.rows(), gain.cols()));
  out.residuals = z - model.h(out.x);
  out.objective = w.matrixL().solve(out.residuals).squaredNorm();
  return out;
}

double objective(const MeasurementSet& set, const MeasurementFunctions& model,
                 const StateVector& state) {
  const Eigen::VectorXd r = set.values() - model.evaluate(state);
  return r.cwiseQuotient(set.variances()).dot(r);
}

EstimationResult wls_estimate(const MeasurementSet& set,
                              const MeasurementFunctions& model,
                              const StateVector& init, WlsOptions options) {
  if (init.coordinates != Coordinates::Polar)
    throw PreconditionError("the nonlinear estimator works in polar coordinates");
  if (init.buses != model.layout())
    throw PreconditionError("initial state layout differs from the model layout");
  if (set.size() != model.rows())
    throw PreconditionError("measurement set does not match the model");
  for (const Measurement& m : set.items)
    if (!(m.sigma > 0.0))
      throw DomainError("measurement standard deviations must be positive");

  const Eigen::Index n = init.size();
  // Unknowns are all magnitudes and every angle but the pinned one.
  std::vector<Eigen::Index> columns;
  for (Eigen::Index i = 0; i < n; ++i) columns.push_back(i);
  const Eigen::Index pinned =
      init.contains(init.reference_bus) ? n + init.index_of(init.reference_bus) : -1;
  for (Eigen::Index i = n; i < 2 * n; ++i)
    if (i != pinned) columns.push_back(i);
  const auto unknowns = static_cast<Eigen::Index>(columns.size());

  Eigen::VectorXd full(2 * n);
  full << init.first, init.second;
  const auto to_state = [&](const Eigen::VectorXd& x) {
    StateVector s = init;
    Eigen::VectorXd stacked = full;
    for (Eigen::Index c = 0; c < unknowns; ++c)
      stacked(columns[static_cast<std::size_t>(c)]) = x(c);
    s.first = stacked.head(n);
    s.second = stacked.tail(n);
    return s;
  };

  NonlinearModel nl;
  nl.h = [&](const Eigen::VectorXd& x) { return model.evaluate(to_state(x)); };
  nl.jacobian = [&](const Eigen::VectorXd& x) {
    const Eigen::MatrixXd jac = model.jacobian(to_state(x));
    Eigen::MatrixXd reduced(jac.rows(), unknowns);
    for (Eigen::Index c = 0; c < unknowns; ++c)
      reduced.col(c) = jac.col(columns[static_cast<std::size_t>(c)]);
    return reduced;
  };

  Eigen::VectorXd x0(unknowns);
  for (Eigen::Index c = 0; c < unknowns; ++c)
    x0(c) = full(columns[static_cast<std::size_t>(c)]);

  const GaussNewtonResult gn =
      gauss_newton(nl, set.values(), set.covariance(), x0, options);

  EstimationResult out;
  out.estimate = to_state(gn.x);
  out.covariance = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index a = 0; a < unknowns; ++a)
    for (Eigen::Index b = 0; b < unknowns; ++b)
      out.covariance(columns[static_cast<std::size_t>(a)],
                     columns[static_cast<std::size_t>(b)]) = gn.gain_inverse(a, b);
  out.iterations = gn.iterations;
  out.converged = gn.converged;
  out.objective = gn.objective;
  out.residuals = gn.residuals;
  return out;
}

EstimationResult estimate_state(const PowerNetwork& net,
                                const MeasurementSet& set,
                                const std::vector<int>& layout,
                                int reference_bus, WlsOptions options) {
  const MeasurementFunctions model(net, set, layout);
  return wls_estimate(set, model, StateVector::flat(layout, reference_bus),
                      options);
}

}  // namespace gridstate
