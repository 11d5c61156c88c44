#include "gridstate/measurement.hpp"

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

constexpr Complex kJ(0.0, 1.0);

bool is_power(MeasurementClass kind) {
  return kind == MeasurementClass::PInjection ||
         kind == MeasurementClass::QInjection ||
         kind == MeasurementClass::PFlow || kind == MeasurementClass::QFlow;
}

bool takes_real_part(MeasurementClass kind) {
  return kind == MeasurementClass::PInjection || kind == MeasurementClass::PFlow ||
         kind == MeasurementClass::PmuIr || kind == MeasurementClass::PmuVr;
}

double sigma_for(MeasurementClass kind, const SigmaTable& sigmas) {
  switch (kind) {
    case MeasurementClass::PInjection:
    case MeasurementClass::QInjection:
      return sigmas.injection;
    case MeasurementClass::PFlow:
    case MeasurementClass::QFlow:
      return sigmas.flow;
    case MeasurementClass::VMagnitude:
      return sigmas.voltage;
    default:
      return sigmas.pmu;
  }
}

}  // namespace

std::string_view to_string(MeasurementClass kind) {
  switch (kind) {
    case MeasurementClass::PInjection: return "P-injection";
    case MeasurementClass::QInjection: return "Q-injection";
    case MeasurementClass::PFlow: return "P-flow";
    case MeasurementClass::QFlow: return "Q-flow";
    case MeasurementClass::VMagnitude: return "V-magnitude";
    case MeasurementClass::PmuVr: return "PMU-V_R";
    case MeasurementClass::PmuVi: return "PMU-V_I";
    case MeasurementClass::PmuIr: return "PMU-I_R";
    case MeasurementClass::PmuIi: return "PMU-I_I";
    case MeasurementClass::PseudoVm: return "pseudo-V";
    case MeasurementClass::PseudoVa: return "pseudo-theta";
  }
  return "unknown";
}

bool is_flow_like(MeasurementClass kind) {
  return kind == MeasurementClass::PFlow || kind == MeasurementClass::QFlow ||
         kind == MeasurementClass::PmuIr || kind == MeasurementClass::PmuIi;
}

Eigen::VectorXd MeasurementSet::values() const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i)
    z(static_cast<Eigen::Index>(i)) = items[i].value;
  return z;
}

Eigen::VectorXd MeasurementSet::variances() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = items[i].sigma * items[i].sigma;
  return v;
}

Eigen::MatrixXd MeasurementSet::covariance() const {
  return variances().asDiagonal();
}

std::vector<int> MeasurementSet::metered_buses() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const Measurement& m : items) out.push_back(m.bus);
  return out;
}

MeasurementSet MeasurementSet::subset(const std::vector<std::size_t>& rows) const {
  MeasurementSet out;
  out.items.reserve(rows.size());
  for (std::size_t r : rows) out.items.push_back(items.at(r));
  return out;
}

void MeasurementSet::append(const MeasurementSet& other) {
  items.insert(items.end(), other.items.begin(), other.items.end());
}

std::vector<MeasurementSet> split_by_area(const PowerNetwork& net,
                                          const AreaPartition& part,
                                          const MeasurementSet& set) {
  const std::vector<int> metered = set.metered_buses();
  std::vector<MeasurementSet> out;
  for (const auto& rows : boundary_measurement_ownership(net, part, metered))
    out.push_back(set.subset(rows));
  return out;
}

MeasurementFunctions::MeasurementFunctions(const PowerNetwork& net,
                                           const MeasurementSet& set,
                                           std::vector<int> layout)
    : layout_(std::move(layout)) {
  std::unordered_map<int, Eigen::Index> position;
  for (std::size_t i = 0; i < layout_.size(); ++i)
    position.emplace(layout_[i], static_cast<Eigen::Index>(i));
  const auto locate = [&](int bus, std::size_t row) {
    const auto it = position.find(bus);
    if (it == position.end())
      throw ReferenceError("measurement " + std::to_string(row) + " needs bus " +
                           std::to_string(bus) + ", which is not in the state");
    return it->second;
  };

  terms_.reserve(set.size());
  for (std::size_t r = 0; r < set.size(); ++r) {
    const Measurement& m = set.items[r];
    if (!net.has_bus(m.bus))
      throw ReferenceError("measurement " + std::to_string(r) +
                           " references unknown bus " + std::to_string(m.bus));
    Row row{m.kind, locate(m.bus, r), {}};
    switch (m.kind) {
      case MeasurementClass::PInjection:
      case MeasurementClass::QInjection: {
        Complex self = net.shunt(net.index_of(m.bus));
        for (std::size_t k : net.incident_branches(m.bus)) {
          const Branch& br = net.branches()[k];
          const BranchAdmittance y = branch_admittance(br);
          if (br.from == m.bus) {
            self += y.ff;
            row.terms.push_back({locate(br.to, r), y.ft});
          } else {
            self += y.tt;
            row.terms.push_back({locate(br.from, r), y.tf});
          }
        }
        row.terms.push_back({row.bus, self});
        break;
      }
      case MeasurementClass::PFlow:
      case MeasurementClass::QFlow:
      case MeasurementClass::PmuIr:
      case MeasurementClass::PmuIi: {
        if (!m.branch || *m.branch >= net.branches().size())
          throw ReferenceError("measurement " + std::to_string(r) +
                               " references a missing branch");
        const Branch& br = net.branches()[*m.branch];
        const BranchAdmittance y = branch_admittance(br);
        if (br.from == m.bus) {
          row.terms = {{row.bus, y.ff}, {locate(br.to, r), y.ft}};
        } else if (br.to == m.bus) {
          row.terms = {{locate(br.from, r), y.tf}, {row.bus, y.tt}};
        } else {
          throw ReferenceError("measurement " + std::to_string(r) +
                               " is metered at a bus the branch does not touch");
        }
        break;
      }
      default:
        break;
    }
    terms_.push_back(std::move(row));
  }
}

Eigen::VectorXcd MeasurementFunctions::phasors(const StateVector& state) const {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(layout_.size()));
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (state.size() == v.size() && state.buses[i] == layout_[i]) {
      v(k) = state.phasor(k);
    } else {
      v(k) = state.phasor(state.index_of(layout_[i]));
    }
  }
  return v;
}

Eigen::VectorXd MeasurementFunctions::evaluate(const StateVector& state) const {
  const Eigen::VectorXcd v = phasors(state);
  Eigen::VectorXd h(static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t r = 0; r < terms_.size(); ++r) {
    const Row& row = terms_[r];
    const auto out = static_cast<Eigen::Index>(r);
    Complex value;
    switch (row.kind) {
      case MeasurementClass::PmuVr:
      case MeasurementClass::PmuVi:
        value = v(row.bus);
        break;
      case MeasurementClass::VMagnitude:
      case MeasurementClass::PseudoVm:
        h(out) = std::abs(v(row.bus));
        continue;
      case MeasurementClass::PseudoVa:
        h(out) = state.coordinates == Coordinates::Polar
                     ? state.second(state.index_of(layout_[static_cast<std::size_t>(row.bus)]))
                     : std::arg(v(row.bus));
        continue;
      default: {
        Complex current = 0.0;
        for (const Term& t : row.terms) current += t.coefficient * v(t.bus);
        value = is_power(row.kind) ? v(row.bus) * std::conj(current) : current;
      }
    }
    h(out) = takes_real_part(row.kind) ? value.real() : value.imag();
  }
  return h;
}

Eigen::MatrixXd MeasurementFunctions::jacobian(const StateVector& state) const {
  const Eigen::VectorXcd v = phasors(state);
  const auto n = static_cast<Eigen::Index>(layout_.size());
  const bool polar = state.coordinates == Coordinates::Polar;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(terms_.size()), 2 * n);
  Eigen::VectorXcd unit(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mag = std::abs(v(i));
    unit(i) = polar ? std::polar(1.0, std::arg(v(i)))
                    : (mag > 0.0 ? v(i) / mag : Complex(1.0, 0.0));
  }

  // d[col] accumulates the complex derivative of the row's complex quantity;
  // the first block is V (or V_R), the second θ (or V_I).
  Eigen::VectorXcd d(2 * n);
  for (std::size_t r = 0; r < terms_.size(); ++r) {
    const Row& row = terms_[r];
    const auto out = static_cast<Eigen::Index>(r);
    const Eigen::Index k = row.bus;
    d.setZero();
    switch (row.kind) {
      case MeasurementClass::VMagnitude:
      case MeasurementClass::PseudoVm:
        if (polar) {
          jac(out, k) = 1.0;
        } else {
          const double mag = std::abs(v(k));
          jac(out, k) = v(k).real() / mag;
          jac(out, n + k) = v(k).imag() / mag;
        }
        continue;
      case MeasurementClass::PseudoVa:
        if (polar) {
          jac(out, n + k) = 1.0;
        } else {
          const double mag2 = std::norm(v(k));
          jac(out, k) = -v(k).imag() / mag2;
          jac(out, n + k) = v(k).real() / mag2;
        }
        continue;
      case MeasurementClass::PmuVr:
      case MeasurementClass::PmuVi:
        if (polar) {
          d(k) = unit(k);
          d(n + k) = kJ * v(k);
        } else {
          d(k) = 1.0;
          d(n + k) = kJ;
        }
        break;
      case MeasurementClass::PmuIr:
      case MeasurementClass::PmuIi:
        for (const Term& t : row.terms) {
          if (polar) {
            d(t.bus) += t.coefficient * unit(t.bus);
            d(n + t.bus) += kJ * t.coefficient * v(t.bus);
          } else {
            d(t.bus) += t.coefficient;
            d(n + t.bus) += kJ * t.coefficient;
          }
        }
        break;
      default:
        // S = Σ conj(y_j) V_k conj(V_j)
        for (const Term& t : row.terms) {
          const Complex c = std::conj(t.coefficient);
          const Complex term = c * v(k) * std::conj(v(t.bus));
          if (polar) {
            d(n + k) += kJ * term;
            d(n + t.bus) -= kJ * term;
            d(k) += c * unit(k) * std::conj(v(t.bus));
            d(t.bus) += c * v(k) * std::conj(unit(t.bus));
          } else {
            d(k) += c * std::conj(v(t.bus));
            d(n + k) += kJ * c * std::conj(v(t.bus));
            d(t.bus) += c * v(k);
            d(n + t.bus) -= kJ * c * v(k);
          }
        }
        break;
    }
    if (takes_real_part(row.kind)) {
      jac.row(out) = d.real().transpose();
    } else {
      jac.row(out) = d.imag().transpose();
    }
  }
  return jac;
}

Eigen::RowVectorXd MeasurementFunctions::linear_row(std::size_t r) const {
  const Row& row = terms_.at(r);
  const auto n = static_cast<Eigen::Index>(layout_.size());
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(2 * n);
  switch (row.kind) {
    case MeasurementClass::PmuVr:
      out(row.bus) = 1.0;
      break;
    case MeasurementClass::PmuVi:
      out(n + row.bus) = 1.0;
      break;
    case MeasurementClass::PmuIr:
      for (const Term& t : row.terms) {
        out(t.bus) += t.coefficient.real();
        out(n + t.bus) -= t.coefficient.imag();
      }
      break;
    case MeasurementClass::PmuIi:
      for (const Term& t : row.terms) {
        out(t.bus) += t.coefficient.imag();
        out(n + t.bus) += t.coefficient.real();
      }
      break;
    default:
      throw PreconditionError("measurement class " +
                              std::string(to_string(row.kind)) +
                              " is not linear in rectangular coordinates");
  }
  return out;
}

Eigen::VectorXd h_eval(const StateVector& state, const MeasurementSet& set,
                       const PowerNetwork& net) {
  return MeasurementFunctions(net, set, state.buses).evaluate(state);
}

Eigen::MatrixXd jacobian(const StateVector& state, const MeasurementSet& set,
                         const PowerNetwork& net) {
  return MeasurementFunctions(net, set, state.buses).jacobian(state);
}

std::size_t find_branch(const PowerNetwork& net, int a, int b) {
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const Branch& br = net.branches()[k];
    if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return k;
  }
  throw ReferenceError("no branch between buses " + std::to_string(a) + " and " +
                       std::to_string(b));
}

MeasurementSet expand_plan(const PowerNetwork& net, const MeasurementPlan& plan,
                           const SigmaTable& sigmas) {
  const auto add = [&](MeasurementSet& set, MeasurementClass kind, int bus,
                       std::optional<std::size_t> branch) {
    const double sigma = sigma_for(kind, sigmas);
    if (!(sigma > 0.0))
      throw DomainError("standard deviation for " + std::string(to_string(kind)) +
                        " must be positive");
    set.items.push_back({kind, bus, branch, 0.0, sigma});
  };

  MeasurementSet set;
  for (int bus : plan.injections) {
    net.index_of(bus);
    add(set, MeasurementClass::PInjection, bus, std::nullopt);
    add(set, MeasurementClass::QInjection, bus, std::nullopt);
  }
  for (const FlowSite& site : plan.flows) {
    const std::size_t k = find_branch(net, site.from, site.to);
    if (site.side != site.from && site.side != site.to)
      throw ReferenceError("flow " + std::to_string(site.from) + "-" +
                           std::to_string(site.to) + " metered at bus " +
                           std::to_string(site.side) + ", not an endpoint");
    add(set, MeasurementClass::PFlow, site.side, k);
    add(set, MeasurementClass::QFlow, site.side, k);
  }
  for (int bus : plan.voltages) {
    net.index_of(bus);
    add(set, MeasurementClass::VMagnitude, bus, std::nullopt);
  }
  for (int bus : plan.pmus) {
    net.index_of(bus);
    add(set, MeasurementClass::PmuVr, bus, std::nullopt);
    add(set, MeasurementClass::PmuVi, bus, std::nullopt);
    for (std::size_t k : net.incident_branches(bus)) {
      add(set, MeasurementClass::PmuIr, bus, k);
      add(set, MeasurementClass::PmuIi, bus, k);
    }
  }
  return set;
}

MeasurementSet synthesize(const PowerNetwork& net, const StateVector& truth,
                          const MeasurementSet& rows, std::uint64_t seed,
                          double noise_scale) {
  MeasurementSet out = rows;
  const Eigen::VectorXd h = h_eval(truth, rows, net);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    const double noise = normal(rng);
    out.items[i].value =
        h(static_cast<Eigen::Index>(i)) + noise_scale * out.items[i].sigma * noise;
  }
  return out;
}

MeasurementSet synthesize(const PowerNetwork& net, const StateVector& truth,
                          const MeasurementPlan& plan, const SigmaTable& sigmas,
                          std::uint64_t seed, double noise_scale) {
  return synthesize(net, truth, expand_plan(net, plan, sigmas), seed, noise_scale);
}

Eigen::MatrixXd polar_to_rect_jacobian(const StateVector& polar) {
  const Eigen::Index n = polar.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double vm = polar.first(i);
    const double c = std::cos(polar.second(i));
    const double s = std::sin(polar.second(i));
    jac(i, i) = c;
    jac(i, n + i) = -vm * s;
    jac(n + i, i) = s;
    jac(n + i, n + i) = vm * c;
  }
  return jac;
}

ConvertedState polar_to_rect(const StateVector& state,
                             const std::optional<Eigen::MatrixXd>& covariance) {
  if (state.coordinates != Coordinates::Polar)
    throw PreconditionError("polar_to_rect expects a polar state");
  ConvertedState out;
  out.state = state;
  out.state.coordinates = Coordinates::Rectangular;
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    out.state.first(i) = state.first(i) * std::cos(state.second(i));
    out.state.second(i) = state.first(i) * std::sin(state.second(i));
  }
  if (covariance) {
    const Eigen::MatrixXd jac = polar_to_rect_jacobian(state);
    out.covariance = jac * *covariance * jac.transpose();
  }
  return out;
}

ConvertedState rect_to_polar(const StateVector& state,
                             const std::optional<Eigen::MatrixXd>& covariance) {
  if (state.coordinates != Coordinates::Rectangular)
    throw PreconditionError("rect_to_polar expects a rectangular state");
  ConvertedState out;
  out.state = state;
  out.state.coordinates = Coordinates::Polar;
  const Eigen::Index n = state.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    out.state.first(i) = std::hypot(state.first(i), state.second(i));
    out.state.second(i) = std::atan2(state.second(i), state.first(i));
  }
  if (covariance) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double vr = state.first(i);
      const double vi = state.second(i);
      const double mag2 = vr * vr + vi * vi;
      const double mag = std::sqrt(mag2);
      jac(i, i) = vr / mag;
      jac(i, n + i) = vi / mag;
      jac(n + i, i) = -vi / mag2;
      jac(n + i, n + i) = vr / mag2;
    }
    out.covariance = jac * *covariance * jac.transpose();
  }
  return out;
}

}  // namespace gridstate
