#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace gridstate {

using Complex = std::complex<double>;

enum class BusKind { Slack, Generator, Load };

/// One bus of the network. Power quantities are stored in the case-file units
/// (MW / MVAr, shunts at 1 p.u. voltage) so that a case file round-trips
/// bit-exactly; use PowerNetwork's per-unit accessors for computation.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  double vm = 1.0;  ///< voltage magnitude, p.u. (set point on slack/PV buses)
  double va = 0.0;  ///< voltage angle, radians (slack angle reference)
  double pd = 0.0;
  double qd = 0.0;
  double gs = 0.0;
  double bs = 0.0;
  double pg = 0.0;
  double qg = 0.0;

  friend bool operator==(const Bus&, const Bus&) = default;
};

/// π-model branch with an off-nominal tap on the from side.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;      ///< total line charging susceptance, p.u.
  double tap = 1.0;    ///< 1.0 means no transformer
  double shift = 0.0;  ///< phase shift, radians

  friend bool operator==(const Branch&, const Branch&) = default;
};

/// Two-port admittance of a branch: [I_from; I_to] = [[ff, ft]; [tf, tt]] [V_from; V_to].
struct BranchAdmittance {
  Complex ff, ft, tf, tt;
};

BranchAdmittance branch_admittance(const Branch& branch);

class PowerNetwork {
 public:
  PowerNetwork() = default;

  /// Validates ids, the slack role, branch endpoints and branch impedances.
  /// Connectivity is checked separately (see require_connected) because a
  /// shunt-only network is a legitimate admittance-matrix input.
  PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches,
               double base_mva);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  double base_mva() const { return base_mva_; }
  std::size_t size() const { return buses_.size(); }

  bool has_bus(int id) const { return index_.contains(id); }
  /// Position of a bus in buses(); throws ReferenceError for unknown ids.
  std::size_t index_of(int id) const;
  const Bus& bus(int id) const { return buses_[index_of(id)]; }
  int slack_bus() const { return slack_; }

  double p_scheduled(std::size_t i) const;
  double q_scheduled(std::size_t i) const;
  Complex shunt(std::size_t i) const;

  /// Ids of buses adjacent to `id`, ascending and without duplicates.
  std::vector<int> neighbors(int id) const;
  /// Indices of branches incident to `id`, in branch order.
  std::vector<std::size_t> incident_branches(int id) const;

  bool connected() const;
  void require_connected() const;

  friend bool operator==(const PowerNetwork& a, const PowerNetwork& b) {
    return a.buses_ == b.buses_ && a.branches_ == b.branches_ &&
           a.base_mva_ == b.base_mva_;
  }

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  double base_mva_ = 100.0;
  std::unordered_map<int, std::size_t> index_;
  std::vector<std::vector<std::size_t>> incident_;
  int slack_ = 0;
};

struct AdmittanceMatrix {
  Eigen::MatrixXcd Y;
  Eigen::MatrixXd G;
  Eigen::MatrixXd B;
};

struct YbusOptions {
  bool require_connected = true;
};

/// Dense bus admittance matrix in network bus order.
AdmittanceMatrix build_ybus(const PowerNetwork& net, YbusOptions options = {});

/// Buses of one area, classified relative to that area. Each list is in
/// ascending bus-id order.
struct AreaBuses {
  int label = 0;      ///< area index as written in the partition file
  int reference = 0;  ///< local reference bus
  std::vector<int> internal;
  std::vector<int> boundary;
  std::vector<int> external;

  /// State layout of the area: internal, then boundary, then external.
  std::vector<int> layout() const;
  /// Buses assigned to this area (internal and boundary), ascending.
  std::vector<int> members() const;
};

struct AreaPartition {
  std::map<int, int> assignment;  ///< bus id -> position in `areas`
  std::vector<AreaBuses> areas;   ///< sorted by label
  std::vector<std::size_t> tie_lines;
  int global_reference = 0;       ///< reference bus of the first area

  std::size_t area_count() const { return areas.size(); }
  std::size_t area_of(int bus) const;
  /// All boundary buses of all areas, ascending.
  std::vector<int> boundary_buses() const;
};

/// Classifies every bus given a bus -> area label map and one reference bus
/// per area label.
AreaPartition partition(const PowerNetwork& net,
                        const std::map<int, int>& assignment,
                        const std::map<int, int>& local_references);

/// Groups measurements by owning area. `metered_buses[k]` is the bus at which
/// measurement k is taken (the bus of an injection or phasor, the metered end
/// of a flow). Returns, per area, the measurement indices it owns.
std::vector<std::vector<std::size_t>> boundary_measurement_ownership(
    const PowerNetwork& net, const AreaPartition& part,
    std::span<const int> metered_buses);

}  // namespace gridstate
