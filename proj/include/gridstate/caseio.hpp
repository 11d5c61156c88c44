#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gridstate/experiment.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/multiarea.hpp"
#include "gridstate/netmodel.hpp"

namespace gridstate {

/// Case file, one record per line, `#` starts a comment:
///   BASEMVA value
///   BUS id kind Vm Va Pd Qd Gs Bs [Pg Qg]    kind: slack | generator | load
///   BRANCH from to r x b tap shift
/// Angles are in radians, powers in MW / MVAr, impedances in p.u.
PowerNetwork parse_case(std::string_view text);
std::string render_case(const PowerNetwork& net);

/// Partition file: `AREA idx REF bus : bus,bus,...`.
struct PartitionSpec {
  std::map<int, int> assignment;  ///< bus -> area label
  std::map<int, int> references;  ///< area label -> reference bus
};

PartitionSpec parse_partition(std::string_view text);

/// Measurement plan: `INJ bus`, `FLOW from to [side]`, `VMAG bus`, `PMU bus`. A flow
/// without a side is metered at `from`.
MeasurementPlan parse_plan(std::string_view text);
std::string render_plan(const MeasurementPlan& plan);

/// Experiment configuration, `key = value` per line. Unknown keys are
/// rejected. Missing keys keep the defaults below.
struct ExperimentConfig {
  std::string case_file;
  std::string partition_file;
  std::string plan_file;
  std::string mode = "multiarea-robust";  ///< {central,multiarea}-{robust,wls}
  SigmaTable sigmas;             ///< 0.01 / 0.008 / 0.001, |V| meters 0.01
  UncertaintyScales uncertainty{0.05, 0.05, 0.0};
  double mu = 1.0;
  bool lambda_exact = false;
  int trials = 1;
  std::uint64_t seed = 1;
  double epsilon = 1e-6;
  int k_limit = 20;
  bool reuse_boundary_measurements = true;
  bool diagonal_tse_covariance = false;
  std::vector<std::string> warnings;
};

ExperimentConfig parse_config(std::string_view text);

struct Redundancy {
  int area_label = 0;
  std::size_t measurements = 0;  ///< SCADA rows owned by the area
  std::size_t states = 0;        ///< 2·|x_i| − 1
  double eta = 0.0;
};

std::vector<Redundancy> redundancy(const PowerNetwork& net, const AreaPartition& part,
                                   const MeasurementPlan& plan);

/// Appends a warning to `config` for every area with η below 1.
void check_redundancy(ExperimentConfig& config, const PowerNetwork& net,
                      const AreaPartition& part, const MeasurementPlan& plan);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string content_hash(std::string_view text);

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  /// From SOURCE_DATE_EPOCH (UTC, ISO 8601), "unset" otherwise, so repeated
  /// runs stay byte-identical.
  std::string timestamp;
  std::vector<std::pair<std::string, std::string>> fixtures;  ///< name, hash
  std::vector<std::pair<std::string, std::string>> notes;
};

std::string manifest_timestamp();

struct ResultRow {
  std::string scope;  ///< "area<label>", "coordinator" or "final"
  int bus = 0;
  double true_v = 0.0;
  double true_theta = 0.0;  ///< rad
  std::vector<double> v, theta, err_v, err_theta;  ///< per method
};

struct ResultTable {
  std::vector<std::string> methods;
  std::vector<ResultRow> rows;
};

/// Per-area rows (area layouts, when every method shares the partition),
/// coordinator rows (boundary buses) and final rows (every bus).
ResultTable tabulate(const std::vector<GlobalResult>& results, const StateVector& truth,
                     const AreaPartition& part);

enum class ResultFormat { Csv, Json };

/// Angles are reported in degrees.
std::string render_results(const ResultTable& table, const Manifest& manifest,
                           ResultFormat format);

/// Monte-Carlo means per bus and method, plus per-trial mean errors.
std::string render_summary(const MonteCarloSummary& summary,
                           const Manifest& manifest, ResultFormat format);

/// Polar state, one row per bus, angles in degrees.
std::string render_state(const StateVector& state, const Manifest& manifest,
                         ResultFormat format);

/// One row per measurement; `from`/`to` are the branch ends of flows and
/// currents, 0 otherwise.
std::string render_measurements(const PowerNetwork& net, const MeasurementSet& set,
                                const Manifest& manifest, ResultFormat format);

void write_results(const std::filesystem::path& path, const ResultTable& table,
                   const Manifest& manifest, ResultFormat format);

}  // namespace gridstate
