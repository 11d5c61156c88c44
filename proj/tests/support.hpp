#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>

#include "gridstate/caseio.hpp"
#include "gridstate/experiment.hpp"

namespace gridstate::testing {

inline std::string data_path(const std::string& name) {
  return std::string(GRIDSTATE_DATA_DIR) + "/" + name;
}

inline PowerNetwork ieee30() { return parse_case(read_text(data_path("ieee30.case"))); }

inline AreaPartition three_areas(const PowerNetwork& net) {
  const PartitionSpec spec = parse_partition(read_text(data_path("ieee30_3area.part")));
  return partition(net, spec.assignment, spec.references);
}

inline MeasurementPlan ieee30_plan() { return parse_plan(read_text(data_path("ieee30.plan"))); }

inline Scenario ieee30_scenario() {
  PowerNetwork net = ieee30();
  AreaPartition part = three_areas(net);
  return make_scenario(std::move(net), std::move(part), ieee30_plan(), SigmaTable{});
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

/// Symmetric positive definite, eigenvalues in [lo, lo + 1 + spread].
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double lo = 0.5) {
  const Eigen::MatrixXd a = random_matrix(n, n, rng);
  return a * a.transpose() / static_cast<double>(n) +
         lo * Eigen::MatrixXd::Identity(n, n);
}

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace gridstate::testing
