#include "gridstate/netmodel.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <string>

#include "gridstate/errors.hpp"

namespace gridstate {

BranchAdmittance branch_admittance(const Branch& branch) {
  const Complex ys = 1.0 / Complex(branch.r, branch.x);
  const Complex charging(0.0, branch.b / 2.0);
  const Complex tap = std::polar(branch.tap, branch.shift);
  const Complex tt = ys + charging;
  return BranchAdmittance{
      .ff = tt / (branch.tap * branch.tap),
      .ft = -ys / std::conj(tap),
      .tf = -ys / tap,
      .tt = tt,
  };
}

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches,
                           double base_mva)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      base_mva_(base_mva) {
  if (buses_.empty()) throw StructuralError("network has no buses");
  if (!(base_mva_ > 0.0)) throw StructuralError("base MVA must be positive");

  int slack_count = 0;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const Bus& bus = buses_[i];
    if (!index_.emplace(bus.id, i).second)
      throw StructuralError("duplicate bus id " + std::to_string(bus.id));
    if (bus.kind == BusKind::Slack) {
      ++slack_count;
      slack_ = bus.id;
    }
    if (!(bus.vm > 0.0))
      throw StructuralError("bus " + std::to_string(bus.id) +
                            " has non-positive voltage magnitude");
  }
  if (slack_count != 1)
    throw StructuralError("network must have exactly one slack bus, found " +
                          std::to_string(slack_count));

  incident_.resize(buses_.size());
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const Branch& br = branches_[k];
    const std::string name =
        "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
    if (!has_bus(br.from) || !has_bus(br.to))
      throw StructuralError(name + " references an unknown bus");
    if (br.from == br.to) throw InvalidBranchError(name + " is a self-loop");
    if (br.r == 0.0 && br.x == 0.0)
      throw InvalidBranchError(name + " has zero impedance");
    if (!(br.tap > 0.0))
      throw InvalidBranchError(name + " has a non-positive tap ratio");
    incident_[index_.at(br.from)].push_back(k);
    incident_[index_.at(br.to)].push_back(k);
  }
}

std::size_t PowerNetwork::index_of(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end())
    throw ReferenceError("unknown bus " + std::to_string(id));
  return it->second;
}

double PowerNetwork::p_scheduled(std::size_t i) const {
  return (buses_[i].pg - buses_[i].pd) / base_mva_;
}

double PowerNetwork::q_scheduled(std::size_t i) const {
  return (buses_[i].qg - buses_[i].qd) / base_mva_;
}

Complex PowerNetwork::shunt(std::size_t i) const {
  return Complex(buses_[i].gs, buses_[i].bs) / base_mva_;
}

std::vector<int> PowerNetwork::neighbors(int id) const {
  std::set<int> out;
  for (std::size_t k : incident_[index_of(id)]) {
    const Branch& br = branches_[k];
    out.insert(br.from == id ? br.to : br.from);
  }
  return {out.begin(), out.end()};
}

std::vector<std::size_t> PowerNetwork::incident_branches(int id) const {
  return incident_[index_of(id)];
}

bool PowerNetwork::connected() const {
  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> pending;
  pending.push(0);
  seen[0] = true;
  std::size_t visited = 1;
  while (!pending.empty()) {
    const std::size_t i = pending.front();
    pending.pop();
    for (std::size_t k : incident_[i]) {
      const Branch& br = branches_[k];
      const std::size_t j =
          index_.at(br.from) == i ? index_.at(br.to) : index_.at(br.from);
      if (!seen[j]) {
        seen[j] = true;
        ++visited;
        pending.push(j);
      }
    }
  }
  return visited == buses_.size();
}

void PowerNetwork::require_connected() const {
  if (!connected()) throw StructuralError("network is not connected");
}

AdmittanceMatrix build_ybus(const PowerNetwork& net, YbusOptions options) {
  if (options.require_connected) net.require_connected();
  const auto n = static_cast<Eigen::Index>(net.size());
  AdmittanceMatrix out;
  out.Y = Eigen::MatrixXcd::Zero(n, n);
  for (const Branch& br : net.branches()) {
    const BranchAdmittance y = branch_admittance(br);
    const auto f = static_cast<Eigen::Index>(net.index_of(br.from));
    const auto t = static_cast<Eigen::Index>(net.index_of(br.to));
    out.Y(f, f) += y.ff;
    out.Y(f, t) += y.ft;
    out.Y(t, f) += y.tf;
    out.Y(t, t) += y.tt;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    out.Y(i, i) += net.shunt(static_cast<std::size_t>(i));
  out.G = out.Y.real();
  out.B = out.Y.imag();
  return out;
}

std::vector<int> AreaBuses::layout() const {
  std::vector<int> out = internal;
  out.insert(out.end(), boundary.begin(), boundary.end());
  out.insert(out.end(), external.begin(), external.end());
  return out;
}

std::vector<int> AreaBuses::members() const {
  std::vector<int> out = internal;
  out.insert(out.end(), boundary.begin(), boundary.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t AreaPartition::area_of(int bus) const {
  const auto it = assignment.find(bus);
  if (it == assignment.end())
    throw ReferenceError("bus " + std::to_string(bus) + " is not partitioned");
  return static_cast<std::size_t>(it->second);
}

std::vector<int> AreaPartition::boundary_buses() const {
  std::vector<int> out;
  for (const AreaBuses& area : areas)
    out.insert(out.end(), area.boundary.begin(), area.boundary.end());
  std::sort(out.begin(), out.end());
  return out;
}

AreaPartition partition(const PowerNetwork& net,
                        const std::map<int, int>& assignment,
                        const std::map<int, int>& local_references) {
  for (const auto& [bus, label] : assignment) {
    if (!net.has_bus(bus))
      throw ConfigError("partition assigns unknown bus " + std::to_string(bus));
  }
  for (const Bus& bus : net.buses()) {
    if (!assignment.contains(bus.id))
      throw ConfigError("bus " + std::to_string(bus.id) +
                        " is not assigned to any area");
  }

  std::set<int> labels;
  for (const auto& entry : assignment) labels.insert(entry.second);
  for (const auto& entry : local_references) {
    if (!labels.contains(entry.first))
      throw ConfigError("reference given for empty area " +
                        std::to_string(entry.first));
  }

  AreaPartition part;
  std::map<int, std::size_t> position;
  for (int label : labels) {
    const auto ref = local_references.find(label);
    if (ref == local_references.end())
      throw ConfigError("area " + std::to_string(label) +
                        " has no reference bus");
    const auto owner = assignment.find(ref->second);
    if (owner == assignment.end() || owner->second != label)
      throw ConfigError("reference bus " + std::to_string(ref->second) +
                        " lies outside area " + std::to_string(label));
    position[label] = part.areas.size();
    AreaBuses area;
    area.label = label;
    area.reference = ref->second;
    part.areas.push_back(std::move(area));
  }
  for (const auto& [bus, label] : assignment)
    part.assignment[bus] = static_cast<int>(position.at(label));

  std::vector<std::set<int>> external(part.areas.size());
  for (const Bus& bus : net.buses()) {
    const std::size_t own = part.area_of(bus.id);
    bool boundary = false;
    for (int other : net.neighbors(bus.id)) {
      if (part.area_of(other) != own) boundary = true;
    }
    AreaBuses& area = part.areas[own];
    (boundary ? area.boundary : area.internal).push_back(bus.id);
    if (boundary) {
      for (int other : net.neighbors(bus.id)) {
        if (part.area_of(other) != own) external[own].insert(other);
      }
    }
  }
  for (std::size_t a = 0; a < part.areas.size(); ++a) {
    AreaBuses& area = part.areas[a];
    std::sort(area.internal.begin(), area.internal.end());
    std::sort(area.boundary.begin(), area.boundary.end());
    area.external.assign(external[a].begin(), external[a].end());
  }
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const Branch& br = net.branches()[k];
    if (part.area_of(br.from) != part.area_of(br.to)) part.tie_lines.push_back(k);
  }
  part.global_reference = part.areas.front().reference;
  return part;
}

std::vector<std::vector<std::size_t>> boundary_measurement_ownership(
    const PowerNetwork& net, const AreaPartition& part,
    std::span<const int> metered_buses) {
  std::vector<std::vector<std::size_t>> owned(part.area_count());
  for (std::size_t k = 0; k < metered_buses.size(); ++k) {
    const int bus = metered_buses[k];
    if (!net.has_bus(bus))
      throw ReferenceError("measurement " + std::to_string(k) +
                           " references unknown bus " + std::to_string(bus));
    owned[part.area_of(bus)].push_back(k);
  }
  return owned;
}

}  // namespace gridstate
