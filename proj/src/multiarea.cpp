#include "gridstate/multiarea.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

bool is_pmu(MeasurementClass kind) {
  return kind == MeasurementClass::PmuVr || kind == MeasurementClass::PmuVi ||
         kind == MeasurementClass::PmuIr || kind == MeasurementClass::PmuIi;
}

void perturb(HybridModel& model, const UncertaintyStructure& u,
             std::uint64_t seed, std::size_t scope) {
  if (u.S.cols() == 0 || u.Eh.rows() == 0) return;
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scope)};
  std::mt19937_64 rng(seq);
  const Eigen::MatrixXd delta = sample_unit_perturbation(u.S.cols(), u.Eh.rows(), rng);
  model.H += u.S * delta * u.Eh;
  model.z += u.S * delta * u.Ez;
}

struct Solved {
  StateVector polar;
  Eigen::MatrixXd covariance;
  double lambda = 0.0;
};

// Perturbs (when asked) and solves a hybrid model, robustly or not.
Solved solve_hybrid(HybridModel model, const PipelineOptions& options,
                    std::size_t scope) {
  const UncertaintyScales& s = options.uncertainty;
  const UncertaintyStructure u = pmu_uncertainty(model, s.s0, s.e0, s.ez0);
  if (options.perturbation_seed) perturb(model, u, *options.perturbation_seed, scope);

  Solved out;
  Eigen::VectorXd x;
  if (options.robust) {
    const RobustSolution sol = hybrid_solve_robust(model, u, options.lambda);
    x = sol.x;
    out.lambda = sol.lambda;
  } else {
    x = weighted_least_squares(model.H, hybrid_weight(model), model.z);
  }
  const ConvertedState polar =
      rect_to_polar(hybrid_state(model, x), hybrid_covariance(model));
  out.polar = polar.state;
  out.covariance = *polar.covariance;
  return out;
}

// Covariance block over [V; θ] of `buses`, from a covariance over [V; θ] of
// `state`.
Eigen::MatrixXd covariance_block(const Eigen::MatrixXd& cov,
                                 const StateVector& state,
                                 const std::vector<int>& buses) {
  const Eigen::Index n = state.size();
  const auto b = static_cast<Eigen::Index>(buses.size());
  std::vector<Eigen::Index> idx;
  for (int bus : buses) idx.push_back(state.index_of(bus));
  for (int bus : buses) idx.push_back(n + state.index_of(bus));
  Eigen::MatrixXd out(2 * b, 2 * b);
  for (Eigen::Index i = 0; i < 2 * b; ++i)
    for (Eigen::Index j = 0; j < 2 * b; ++j)
      out(i, j) = cov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  return out;
}

LocalResult solve_area(const PowerNetwork& net, const AreaPartition& part,
                       std::size_t a, const AreaMeasurements& meas,
                       const PipelineOptions& options) {
  const AreaBuses& area = part.areas[a];
  LocalResult out;
  out.area = a;
  out.tse = estimate_state(net, meas.scada, area.layout(), area.reference, options.wls);
  if (!out.tse.converged)
    throw DivergenceError(
        fmt::format("traditional estimate did not converge in {} iterations",
                    options.wls.max_iterations),
        0.0);
  const HybridModel model = build_hybrid_model(out.tse, meas.pmu, net, options.hybrid);
  Solved solved = solve_hybrid(model, options, a);
  out.estimate = std::move(solved.polar);
  out.covariance = std::move(solved.covariance);
  out.lambda = solved.lambda;

  std::vector<int> pseudo = area.boundary;
  pseudo.insert(pseudo.end(), area.external.begin(), area.external.end());
  out.pseudo = out.estimate.restricted(pseudo);
  out.pseudo_covariance = covariance_block(out.covariance, out.estimate, pseudo);
  spdlog::debug("area {}: TSE {} iterations, lambda {:.6g}", area.label,
                out.tse.iterations, out.lambda);
  return out;
}

StateVector in_network_order(const PowerNetwork& net, const StateVector& s) {
  std::vector<int> ids;
  for (const Bus& bus : net.buses()) ids.push_back(bus.id);
  return s.restricted(ids);
}

}  // namespace

std::vector<AreaMeasurements> split_measurements(const PowerNetwork& net,
                                                 const AreaPartition& part,
                                                 const MeasurementSet& scada,
                                                 const MeasurementSet& pmu) {
  for (const Measurement& m : scada.items)
    if (is_pmu(m.kind))
      throw PreconditionError("phasor measurement found among SCADA measurements");
  for (const Measurement& m : pmu.items)
    if (!is_pmu(m.kind))
      throw PreconditionError("SCADA measurement found among phasor measurements");
  const std::vector<MeasurementSet> s = split_by_area(net, part, scada);
  const std::vector<MeasurementSet> p = split_by_area(net, part, pmu);
  std::vector<AreaMeasurements> out(part.area_count());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = {s[a], p[a]};
  return out;
}

MeasurementSet boundary_measurements(const PowerNetwork& net,
                                     const AreaPartition& part,
                                     const MeasurementSet& scada) {
  const std::vector<int> bnd = part.boundary_buses();
  const std::set<int> boundary(bnd.begin(), bnd.end());
  const std::set<std::size_t> ties(part.tie_lines.begin(), part.tie_lines.end());
  MeasurementSet out;
  for (const Measurement& m : scada.items) {
    net.index_of(m.bus);
    const bool injection = m.kind == MeasurementClass::PInjection ||
                           m.kind == MeasurementClass::QInjection;
    const bool flow = m.kind == MeasurementClass::PFlow || m.kind == MeasurementClass::QFlow;
    if ((injection && boundary.contains(m.bus)) ||
        (flow && m.branch && ties.contains(*m.branch)))
      out.items.push_back(m);
  }
  return out;
}

MeasurementSet boundary_pmus(const AreaPartition& part, const MeasurementSet& pmu) {
  const std::vector<int> bnd = part.boundary_buses();
  MeasurementSet out;
  for (const Measurement& m : pmu.items)
    if (std::binary_search(bnd.begin(), bnd.end(), m.bus)) out.items.push_back(m);
  return out;
}

std::vector<LocalResult> level1_run(const PowerNetwork& net,
                                    const AreaPartition& part,
                                    const std::vector<AreaMeasurements>& areas,
                                    const PipelineOptions& options) {
  if (areas.size() != part.area_count())
    throw PreconditionError(fmt::format("{} measurement groups for {} areas",
                                        areas.size(), part.area_count()));
  const std::size_t r = part.area_count();
  std::vector<std::future<LocalResult>> pending;
  for (std::size_t a = 0; a < r; ++a) {
    const auto policy = options.parallel && r > 1 ? std::launch::async
                                                  : std::launch::deferred;
    pending.push_back(std::async(policy, [&, a] {
      return solve_area(net, part, a, areas[a], options);
    }));
  }

  std::vector<LocalResult> out;
  std::vector<std::string> failures;
  std::optional<Error::Category> category;
  for (std::size_t a = 0; a < r; ++a) {
    try {
      out.push_back(pending[a].get());
    } catch (const Error& e) {
      failures.push_back(fmt::format("area {}: {}", part.areas[a].label, e.what()));
      if (!category) category = e.category();
    }
  }
  if (!failures.empty()) {
    std::string message = "level 1 failed";
    for (const std::string& f : failures) message += "; " + f;
    throw Error(*category, message);
  }
  return out;
}

GlobalResult level2_run(const PowerNetwork& net, const AreaPartition& part,
                        std::vector<LocalResult> locals,
                        const MeasurementSet& boundary,
                        const MeasurementSet& coordinator_pmu,
                        const PipelineOptions& options) {
  const std::size_t r = part.area_count();
  if (locals.size() != r)
    throw PreconditionError("level 2 needs one level-1 result per area");
  const std::vector<int> bnd = part.boundary_buses();
  const auto nb = static_cast<Eigen::Index>(bnd.size());
  const Eigen::Index np = 2 * nb + static_cast<Eigen::Index>(r) - 1;
  std::map<int, Eigen::Index> slot;
  for (Eigen::Index j = 0; j < nb; ++j) slot[bnd[static_cast<std::size_t>(j)]] = j;

  std::vector<int> ids;
  for (const Bus& bus : net.buses()) ids.push_back(bus.id);
  const auto N = static_cast<Eigen::Index>(ids.size());
  const MeasurementFunctions functions(net, boundary, ids);
  const auto mb = static_cast<Eigen::Index>(boundary.size());

  // Pseudo rows: per area, V then θ of its boundary and external buses.
  Eigen::Index pseudo_rows = 0;
  for (const LocalResult& l : locals) pseudo_rows += 2 * l.pseudo.size();
  const Eigen::Index m = mb + pseudo_rows;
  Eigen::VectorXd z(m);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
  z.head(mb) = boundary.values();
  W.topLeftCorner(mb, mb) = boundary.variances().asDiagonal();
  {
    Eigen::Index row = mb;
    for (const LocalResult& l : locals) {
      const Eigen::Index k = l.pseudo.size();
      z.segment(row, k) = l.pseudo.first;
      z.segment(row + k, k) = l.pseudo.second;
      W.block(row, row, 2 * k, 2 * k) = l.pseudo_covariance;
      row += 2 * k;
    }
  }

  const auto offset_slot = [&](std::size_t a) -> Eigen::Index {
    return a == 0 ? -1 : 2 * nb + static_cast<Eigen::Index>(a) - 1;
  };
  const auto full_state = [&](const Eigen::VectorXd& p) {
    StateVector s = StateVector::flat(ids, part.global_reference);
    for (Eigen::Index i = 0; i < N; ++i) {
      const int bus = ids[static_cast<std::size_t>(i)];
      if (const auto it = slot.find(bus); it != slot.end()) {
        s.first(i) = p(nb + it->second);
        s.second(i) = p(it->second);
      } else {
        const std::size_t a = part.area_of(bus);
        const StateVector& est = locals[a].estimate;
        const Eigen::Index k = est.index_of(bus);
        const Eigen::Index u = offset_slot(a);
        s.first(i) = est.first(k);
        s.second(i) = est.second(k) + (u < 0 ? 0.0 : p(u));
      }
    }
    return s;
  };

  NonlinearModel model;
  model.h = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd h(m);
    h.head(mb) = functions.evaluate(full_state(p));
    Eigen::Index row = mb;
    for (std::size_t a = 0; a < r; ++a) {
      const StateVector& ps = locals[a].pseudo;
      const Eigen::Index k = ps.size();
      const Eigen::Index u = offset_slot(a);
      for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = slot.at(ps.buses[static_cast<std::size_t>(i)]);
        h(row + i) = p(nb + j);
        h(row + k + i) = p(j) - (u < 0 ? 0.0 : p(u));
      }
      row += 2 * k;
    }
    return h;
  };
  model.jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, np);
    if (mb > 0) {
      const Eigen::MatrixXd hx = functions.jacobian(full_state(p));
      for (Eigen::Index i = 0; i < N; ++i) {
        const int bus = ids[static_cast<std::size_t>(i)];
        if (const auto it = slot.find(bus); it != slot.end()) {
          J.block(0, nb + it->second, mb, 1) += hx.col(i);
          J.block(0, it->second, mb, 1) += hx.col(N + i);
        } else if (const Eigen::Index u = offset_slot(part.area_of(bus)); u >= 0) {
          J.block(0, u, mb, 1) += hx.col(N + i);
        }
      }
    }
    Eigen::Index row = mb;
    for (std::size_t a = 0; a < r; ++a) {
      const StateVector& ps = locals[a].pseudo;
      const Eigen::Index k = ps.size();
      const Eigen::Index u = offset_slot(a);
      for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = slot.at(ps.buses[static_cast<std::size_t>(i)]);
        J(row + i, nb + j) = 1.0;
        J(row + k + i, j) = 1.0;
        if (u >= 0) J(row + k + i, u) = -1.0;
      }
      row += 2 * k;
    }
    return J;
  };

  // Warm start: pseudo values averaged across areas, zero offsets.
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(nb);
  for (const LocalResult& l : locals)
    for (Eigen::Index i = 0; i < l.pseudo.size(); ++i) {
      const Eigen::Index j = slot.at(l.pseudo.buses[static_cast<std::size_t>(i)]);
      p0(j) += l.pseudo.second(i);
      p0(nb + j) += l.pseudo.first(i);
      count(j) += 1.0;
    }
  for (Eigen::Index j = 0; j < nb; ++j) {
    p0(j) /= count(j);
    p0(nb + j) /= count(j);
  }

  GlobalResult out;
  out.method = options.robust ? "robust" : "non-robust";
  CoordinatorResult coord;
  try {
    coord.nonlinear = gauss_newton(model, z, W, p0, options.wls);
  } catch (const UnobservableError&) {
    const Eigen::MatrixXd J = model.jacobian(p0);
    const Eigen::MatrixXd gain =
        J.transpose() * W.llt().solve(J);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gain);
    const Eigen::VectorXd null = eig.eigenvectors().col(0);
    std::vector<std::string> names;
    for (Eigen::Index c = 0; c < np; ++c) {
      if (std::abs(null(c)) < 0.1) continue;
      if (c < nb) names.push_back(fmt::format("theta_{}", bnd[static_cast<std::size_t>(c)]));
      else if (c < 2 * nb) names.push_back(fmt::format("V_{}", bnd[static_cast<std::size_t>(c - nb)]));
      else names.push_back(fmt::format("u_{}", part.areas[static_cast<std::size_t>(c - 2 * nb + 1)].label));
    }
    std::string list;
    for (const std::string& s : names) list += (list.empty() ? "" : ", ") + s;
    throw RankError("coordinator normal matrix is singular; deficient states: " + list);
  }
  if (!coord.nonlinear.converged)
    throw DivergenceError(
        fmt::format("coordinator did not converge in {} iterations",
                    options.wls.max_iterations),
        0.0);
  const Eigen::VectorXd& p = coord.nonlinear.x;
  coord.offsets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r));
  for (std::size_t a = 1; a < r; ++a) coord.offsets(static_cast<Eigen::Index>(a)) = p(offset_slot(a));

  StateVector& nl = coord.nonlinear_estimate;
  nl.coordinates = Coordinates::Polar;
  nl.buses = bnd;
  nl.reference_bus = locals.front().estimate.reference_bus;
  nl.first = p.segment(nb, nb);
  nl.second = p.head(nb);
  Eigen::MatrixXd nl_cov(2 * nb, 2 * nb);
  {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < nb; ++j) idx.push_back(nb + j);
    for (Eigen::Index j = 0; j < nb; ++j) idx.push_back(j);
    for (Eigen::Index i = 0; i < 2 * nb; ++i)
      for (Eigen::Index j = 0; j < 2 * nb; ++j)
        nl_cov(i, j) = coord.nonlinear.gain_inverse(idx[static_cast<std::size_t>(i)],
                                                    idx[static_cast<std::size_t>(j)]);
  }

  // Internal buses, now on the common frame.
  std::map<int, Complex> fixed;
  const StateVector internal = full_state(p);
  for (Eigen::Index i = 0; i < N; ++i)
    if (!slot.contains(ids[static_cast<std::size_t>(i)]))
      fixed[ids[static_cast<std::size_t>(i)]] = internal.phasor(i);

  const HybridModel hm =
      build_hybrid_model(nl, nl_cov, coordinator_pmu, net, options.hybrid, fixed);
  Solved solved = solve_hybrid(hm, options, r);
  coord.estimate = std::move(solved.polar);
  coord.lambda = solved.lambda;

  StateVector final_state = internal;
  final_state.reference_bus = coord.estimate.reference_bus;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int bus = ids[static_cast<std::size_t>(i)];
    if (const auto it = slot.find(bus); it != slot.end()) {
      final_state.first(i) = coord.estimate.first(it->second);
      final_state.second(i) = coord.estimate.second(it->second);
    } else {
      final_state.second(i) += hm.frame_shift;
    }
  }
  spdlog::debug("coordinator: {} iterations, lambda {:.6g}",
                coord.nonlinear.iterations, coord.lambda);
  out.estimate = std::move(final_state);
  out.locals = std::move(locals);
  out.coordinator = std::move(coord);
  return out;
}

GlobalResult run_two_level(const PowerNetwork& net, const AreaPartition& part,
                           const MeasurementSet& scada, const MeasurementSet& pmu,
                           const PipelineOptions& options) {
  const std::vector<AreaMeasurements> areas = split_measurements(net, part, scada, pmu);
  std::vector<LocalResult> locals = level1_run(net, part, areas, options);
  if (part.area_count() == 1) {
    GlobalResult out;
    out.method = options.robust ? "robust" : "non-robust";
    out.estimate = in_network_order(net, locals.front().estimate);
    out.locals = std::move(locals);
    return out;
  }
  const MeasurementSet boundary = options.reuse_boundary_measurements
                                      ? boundary_measurements(net, part, scada)
                                      : MeasurementSet{};
  return level2_run(net, part, std::move(locals), boundary, boundary_pmus(part, pmu),
                    options);
}

GlobalResult run_central(const PowerNetwork& net, const MeasurementSet& scada,
                         const MeasurementSet& pmu, int reference_bus,
                         const PipelineOptions& options) {
  std::map<int, int> assignment;
  for (const Bus& bus : net.buses()) assignment[bus.id] = 1;
  const AreaPartition part = partition(net, assignment, {{1, reference_bus}});
  return run_two_level(net, part, scada, pmu, options);
}

double wrap_angle(double a, double b) {
  double d = std::remainder(a - b, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

BusErrors compute_errors(const StateVector& estimate, const StateVector& truth) {
  const double shift = truth.contains(estimate.reference_bus)
                           ? std::arg(truth.phasor(truth.index_of(estimate.reference_bus)))
                           : 0.0;
  BusErrors out;
  out.buses = estimate.buses;
  out.dv.resize(estimate.size());
  out.dtheta.resize(estimate.size());
  for (Eigen::Index i = 0; i < estimate.size(); ++i) {
    const Complex e = estimate.phasor(i);
    const Complex t = truth.phasor(truth.index_of(estimate.buses[static_cast<std::size_t>(i)]));
    out.dv(i) = std::abs(std::abs(e) - std::abs(t));
    out.dtheta(i) = std::abs(wrap_angle(std::arg(e), std::arg(t) - shift));
  }
  return out;
}

}  // namespace gridstate
