#include "gridstate/caseio.hpp"

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "gridstate/errors.hpp"

namespace gridstate {
namespace {

constexpr double kDegrees = 180.0 / std::numbers::pi;

struct Line {
  std::size_t number;
  std::vector<std::string> tokens;
};

std::string_view strip_comment(std::string_view line) {
  const std::size_t hash = line.find('#');
  return hash == std::string_view::npos ? line : line.substr(0, hash);
}

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    std::istringstream in{std::string(strip_comment(text.substr(start, end - start)))};
    Line line{number, {}};
    for (std::string tok; in >> tok;) line.tokens.push_back(tok);
    if (!line.tokens.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

double to_double(const std::string& s, std::size_t line, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(line, fmt::format("{} '{}' is not a finite number", what, s));
  return v;
}

int to_int(const std::string& s, std::size_t line, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(line, fmt::format("{} '{}' is not an integer", what, s));
  return v;
}

std::uint64_t to_u64(const std::string& s, std::size_t line, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(line, fmt::format("{} '{}' is not a non-negative integer", what, s));
  return v;
}

bool to_bool(const std::string& s, std::size_t line, std::string_view what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ParseError(line, fmt::format("{} '{}' is not a boolean", what, s));
}

BusKind to_kind(const std::string& s, std::size_t line) {
  if (s == "slack") return BusKind::Slack;
  if (s == "generator" || s == "gen" || s == "pv") return BusKind::Generator;
  if (s == "load" || s == "pq") return BusKind::Load;
  throw ParseError(line, fmt::format("unknown bus kind '{}'", s));
}

std::string_view kind_name(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::Generator: return "generator";
    case BusKind::Load: return "load";
  }
  return "load";
}

void expect_fields(const Line& l, std::size_t lo, std::size_t hi) {
  const std::size_t n = l.tokens.size() - 1;
  if (n < lo || n > hi)
    throw ParseError(l.number,
                     lo == hi ? fmt::format("{} expects {} fields, found {}",
                                            l.tokens[0], lo, n)
                              : fmt::format("{} expects {} to {} fields, found {}",
                                            l.tokens[0], lo, hi, n));
}

std::string number(double v) { return fmt::format("{:.12g}", v); }

}  // namespace

PowerNetwork parse_case(std::string_view text) {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::optional<double> base;
  std::map<int, std::size_t> seen;
  for (const Line& l : tokenize(text)) {
    const std::string& tag = l.tokens[0];
    if (tag == "BASEMVA") {
      expect_fields(l, 1, 1);
      if (base) throw ParseError(l.number, "BASEMVA given twice");
      base = to_double(l.tokens[1], l.number, "base MVA");
    } else if (tag == "BUS") {
      expect_fields(l, 8, 10);
      if (l.tokens.size() == 10)
        throw ParseError(l.number, "BUS generation needs both Pg and Qg");
      Bus b;
      b.id = to_int(l.tokens[1], l.number, "bus id");
      b.kind = to_kind(l.tokens[2], l.number);
      b.vm = to_double(l.tokens[3], l.number, "Vm");
      b.va = to_double(l.tokens[4], l.number, "Va");
      b.pd = to_double(l.tokens[5], l.number, "Pd");
      b.qd = to_double(l.tokens[6], l.number, "Qd");
      b.gs = to_double(l.tokens[7], l.number, "Gs");
      b.bs = to_double(l.tokens[8], l.number, "Bs");
      if (l.tokens.size() == 11) {
        b.pg = to_double(l.tokens[9], l.number, "Pg");
        b.qg = to_double(l.tokens[10], l.number, "Qg");
      }
      if (const auto it = seen.find(b.id); it != seen.end())
        throw StructuralError(fmt::format("line {}: duplicate bus id {} (first on line {})",
                                          l.number, b.id, it->second));
      seen.emplace(b.id, l.number);
      buses.push_back(b);
    } else if (tag == "BRANCH") {
      expect_fields(l, 7, 7);
      Branch br;
      br.from = to_int(l.tokens[1], l.number, "from bus");
      br.to = to_int(l.tokens[2], l.number, "to bus");
      br.r = to_double(l.tokens[3], l.number, "r");
      br.x = to_double(l.tokens[4], l.number, "x");
      br.b = to_double(l.tokens[5], l.number, "b");
      br.tap = to_double(l.tokens[6], l.number, "tap");
      br.shift = to_double(l.tokens[7], l.number, "shift");
      branches.push_back(br);
    } else {
      throw ParseError(l.number, fmt::format("unknown record '{}'", tag));
    }
  }
  if (buses.empty()) throw ParseError(0, "case has no BUS records");
  return PowerNetwork(std::move(buses), std::move(branches), base.value_or(100.0));
}

std::string render_case(const PowerNetwork& net) {
  std::string out = fmt::format("BASEMVA {:.17g}\n", net.base_mva());
  for (const Bus& b : net.buses())
    out += fmt::format("BUS {} {} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n",
                       b.id, kind_name(b.kind), b.vm, b.va, b.pd, b.qd, b.gs, b.bs,
                       b.pg, b.qg);
  for (const Branch& br : net.branches())
    out += fmt::format("BRANCH {} {} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n",
                       br.from, br.to, br.r, br.x, br.b, br.tap, br.shift);
  return out;
}

PartitionSpec parse_partition(std::string_view text) {
  PartitionSpec spec;
  for (const Line& l : tokenize(text)) {
    if (l.tokens[0] != "AREA")
      throw ParseError(l.number, fmt::format("unknown record '{}'", l.tokens[0]));
    if (l.tokens.size() < 5 || l.tokens[2] != "REF" || l.tokens[4] != ":")
      throw ParseError(l.number, "expected 'AREA idx REF bus : bus,bus,...'");
    const int label = to_int(l.tokens[1], l.number, "area index");
    const int ref = to_int(l.tokens[3], l.number, "reference bus");
    if (!spec.references.emplace(label, ref).second)
      throw ParseError(l.number, fmt::format("area {} defined twice", label));
    std::string list;
    for (std::size_t i = 5; i < l.tokens.size(); ++i) list += l.tokens[i];
    if (list.empty()) throw ParseError(l.number, fmt::format("area {} has no buses", label));
    std::size_t start = 0;
    while (start <= list.size()) {
      std::size_t end = list.find(',', start);
      if (end == std::string::npos) end = list.size();
      const int bus = to_int(list.substr(start, end - start), l.number, "bus id");
      if (!spec.assignment.emplace(bus, label).second)
        throw ParseError(l.number, fmt::format("bus {} assigned twice", bus));
      start = end + 1;
    }
  }
  if (spec.references.empty()) throw ParseError(0, "partition has no AREA records");
  return spec;
}

MeasurementPlan parse_plan(std::string_view text) {
  MeasurementPlan plan;
  for (const Line& l : tokenize(text)) {
    const std::string& tag = l.tokens[0];
    if (tag == "INJ") {
      expect_fields(l, 1, 1);
      plan.injections.push_back(to_int(l.tokens[1], l.number, "bus"));
    } else if (tag == "FLOW") {
      expect_fields(l, 2, 3);
      FlowSite f;
      f.from = to_int(l.tokens[1], l.number, "from bus");
      f.to = to_int(l.tokens[2], l.number, "to bus");
      f.side = l.tokens.size() == 4 ? to_int(l.tokens[3], l.number, "side") : f.from;
      if (f.side != f.from && f.side != f.to)
        throw ParseError(l.number, fmt::format("side {} is not an end of {}-{}",
                                               f.side, f.from, f.to));
      plan.flows.push_back(f);
    } else if (tag == "VMAG") {
      expect_fields(l, 1, 1);
      plan.voltages.push_back(to_int(l.tokens[1], l.number, "bus"));
    } else if (tag == "PMU") {
      expect_fields(l, 1, 1);
      plan.pmus.push_back(to_int(l.tokens[1], l.number, "bus"));
    } else {
      throw ParseError(l.number, fmt::format("unknown record '{}'", tag));
    }
  }
  return plan;
}

std::string render_plan(const MeasurementPlan& plan) {
  std::string out;
  for (int bus : plan.injections) out += fmt::format("INJ {}\n", bus);
  for (const FlowSite& f : plan.flows)
    out += fmt::format("FLOW {} {} {}\n", f.from, f.to, f.side);
  for (int bus : plan.voltages) out += fmt::format("VMAG {}\n", bus);
  for (int bus : plan.pmus) out += fmt::format("PMU {}\n", bus);
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    std::string_view raw = strip_comment(text.substr(start, end - start));
    start = end + 1;
    const auto trim = [](std::string_view s) {
      const std::size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string_view::npos) return std::string();
      const std::size_t b = s.find_last_not_of(" \t\r");
      return std::string(s.substr(a, b - a + 1));
    };
    if (trim(raw).empty()) continue;
    const std::size_t eq = raw.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(number, "expected 'key = value'");
    const std::string key = trim(raw.substr(0, eq));
    const std::string value = trim(raw.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(number, "expected 'key = value'");
    if (!seen.insert(key).second)
      throw ParseError(number, fmt::format("key '{}' given twice", key));

    if (key == "case") c.case_file = value;
    else if (key == "partition") c.partition_file = value;
    else if (key == "plan") c.plan_file = value;
    else if (key == "mode") c.mode = value;
    else if (key == "sigma_injection") c.sigmas.injection = to_double(value, number, key);
    else if (key == "sigma_flow") c.sigmas.flow = to_double(value, number, key);
    else if (key == "sigma_pmu") c.sigmas.pmu = to_double(value, number, key);
    else if (key == "sigma_voltage") c.sigmas.voltage = to_double(value, number, key);
    else if (key == "s0") c.uncertainty.s0 = to_double(value, number, key);
    else if (key == "e0") c.uncertainty.e0 = to_double(value, number, key);
    else if (key == "ez0") c.uncertainty.ez0 = to_double(value, number, key);
    else if (key == "mu") c.mu = to_double(value, number, key);
    else if (key == "lambda_exact") c.lambda_exact = to_bool(value, number, key);
    else if (key == "trials") c.trials = to_int(value, number, key);
    else if (key == "seed") c.seed = to_u64(value, number, key);
    else if (key == "epsilon") c.epsilon = to_double(value, number, key);
    else if (key == "k_limit") c.k_limit = to_int(value, number, key);
    else if (key == "reuse_boundary_measurements")
      c.reuse_boundary_measurements = to_bool(value, number, key);
    else if (key == "diagonal_tse_covariance")
      c.diagonal_tse_covariance = to_bool(value, number, key);
    else throw ConfigError(fmt::format("line {}: unknown key '{}'", number, key));
  }

  if (!(c.sigmas.injection > 0.0) || !(c.sigmas.flow > 0.0) || !(c.sigmas.pmu > 0.0) ||
      !(c.sigmas.voltage > 0.0))
    throw ConfigError("every measurement standard deviation must be positive");
  if (c.mode != "central-robust" && c.mode != "central-wls" &&
      c.mode != "multiarea-robust" && c.mode != "multiarea-wls")
    throw ConfigError(fmt::format("unknown mode '{}'", c.mode));
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (c.k_limit < 1) throw ConfigError("k_limit must be at least 1");
  if (!(c.mu >= 0.0)) throw ConfigError("mu must be non-negative");
  if (c.uncertainty.s0 < 0.0 || c.uncertainty.e0 < 0.0 || c.uncertainty.ez0 < 0.0)
    throw ConfigError("uncertainty scales must be non-negative");
  return c;
}

std::vector<Redundancy> redundancy(const PowerNetwork& net, const AreaPartition& part,
                                   const MeasurementPlan& plan) {
  MeasurementPlan scada = plan;
  scada.pmus.clear();
  const MeasurementSet rows = expand_plan(net, scada, SigmaTable{});
  const std::vector<MeasurementSet> owned = split_by_area(net, part, rows);
  std::vector<Redundancy> out;
  for (std::size_t a = 0; a < part.area_count(); ++a) {
    Redundancy r;
    r.area_label = part.areas[a].label;
    r.measurements = owned[a].size();
    r.states = 2 * part.areas[a].layout().size() - 1;
    r.eta = static_cast<double>(r.measurements) / static_cast<double>(r.states);
    out.push_back(r);
  }
  return out;
}

void check_redundancy(ExperimentConfig& config, const PowerNetwork& net,
                      const AreaPartition& part, const MeasurementPlan& plan) {
  for (const Redundancy& r : redundancy(net, part, plan))
    if (r.eta < 1.0)
      config.warnings.push_back(fmt::format(
          "area {}: redundancy {:.3f} = {}/{} is below 1; the area is not observable",
          r.area_label, r.eta, r.measurements, r.states));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}': file not found or unreadable",
                                     path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(fmt::format("failed while writing '{}'", path.string()));
}

std::string content_hash(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

std::string manifest_timestamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (epoch == nullptr) return "unset";
  std::int64_t seconds = 0;
  const std::string_view s(epoch);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seconds);
  if (ec != std::errc() || ptr != s.data() + s.size()) return "unset";
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm utc{};
  gmtime_r(&t, &utc);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", utc.tm_year + 1900,
                     utc.tm_mon + 1, utc.tm_mday, utc.tm_hour, utc.tm_min, utc.tm_sec);
}

ResultTable tabulate(const std::vector<GlobalResult>& results, const StateVector& truth,
                     const AreaPartition& part) {
  ResultTable table;
  if (results.empty()) return table;
  for (const GlobalResult& g : results) table.methods.push_back(g.method);

  const auto add_rows = [&](const std::string& scope,
                            const std::vector<const StateVector*>& estimates) {
    std::vector<BusErrors> errors;
    for (const StateVector* e : estimates) errors.push_back(compute_errors(*e, truth));
    const StateVector& first = *estimates.front();
    for (Eigen::Index i = 0; i < first.size(); ++i) {
      ResultRow row;
      row.scope = scope;
      row.bus = first.buses[static_cast<std::size_t>(i)];
      const Complex t = truth.phasor(truth.index_of(row.bus));
      row.true_v = std::abs(t);
      row.true_theta = std::arg(t);
      for (std::size_t k = 0; k < estimates.size(); ++k) {
        const Complex e = estimates[k]->phasor(estimates[k]->index_of(row.bus));
        row.v.push_back(std::abs(e));
        row.theta.push_back(std::arg(e));
        row.err_v.push_back(errors[k].dv(estimates[k]->index_of(row.bus)));
        row.err_theta.push_back(errors[k].dtheta(estimates[k]->index_of(row.bus)));
      }
      table.rows.push_back(std::move(row));
    }
  };

  const GlobalResult& ref = results.front();
  bool same_areas = true;
  for (const GlobalResult& g : results) {
    if (g.locals.size() != ref.locals.size()) same_areas = false;
    else
      for (std::size_t a = 0; a < g.locals.size(); ++a)
        if (g.locals[a].estimate.buses != ref.locals[a].estimate.buses) same_areas = false;
  }
  if (same_areas) {
    for (std::size_t a = 0; a < ref.locals.size(); ++a) {
      std::vector<const StateVector*> est;
      for (const GlobalResult& g : results) est.push_back(&g.locals[a].estimate);
      const int label = a < part.areas.size() && ref.locals.size() == part.area_count()
                            ? part.areas[a].label
                            : static_cast<int>(a + 1);
      add_rows(fmt::format("area{}", label), est);
    }
  }
  bool coordinated = true;
  for (const GlobalResult& g : results)
    if (!g.coordinator || g.coordinator->estimate.buses != ref.coordinator->estimate.buses)
      coordinated = false;
  if (coordinated && ref.coordinator) {
    std::vector<const StateVector*> est;
    for (const GlobalResult& g : results) est.push_back(&g.coordinator->estimate);
    add_rows("coordinator", est);
  }
  std::vector<const StateVector*> est;
  for (const GlobalResult& g : results) est.push_back(&g.estimate);
  add_rows("final", est);
  return table;
}

namespace {

nlohmann::ordered_json manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["timestamp"] = m.timestamp;
  nlohmann::ordered_json fixtures = nlohmann::ordered_json::array();
  for (const auto& [name, hash] : m.fixtures) fixtures.push_back({{"name", name}, {"hash", hash}});
  j["fixtures"] = fixtures;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.notes) notes[k] = v;
  j["notes"] = notes;
  return j;
}

std::string manifest_csv(const Manifest& m) {
  std::string out;
  out += fmt::format("# command: {}\n", m.command);
  out += fmt::format("# config_hash: {}\n", m.config_hash);
  out += fmt::format("# seed: {}\n", m.seed);
  out += fmt::format("# timestamp: {}\n", m.timestamp);
  for (const auto& [name, hash] : m.fixtures) out += fmt::format("# fixture: {} {}\n", name, hash);
  for (const auto& [k, v] : m.notes) out += fmt::format("# {}: {}\n", k, v);
  return out;
}

}  // namespace

std::string render_results(const ResultTable& table, const Manifest& manifest,
                           ResultFormat format) {
  if (format == ResultFormat::Json) {
    nlohmann::ordered_json j;
    j["manifest"] = manifest_json(manifest);
    j["methods"] = table.methods;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const ResultRow& r : table.rows) {
      nlohmann::ordered_json row;
      row["scope"] = r.scope;
      row["bus"] = r.bus;
      row["true_V"] = r.true_v;
      row["true_theta_deg"] = r.true_theta * kDegrees;
      nlohmann::ordered_json methods = nlohmann::ordered_json::object();
      for (std::size_t k = 0; k < table.methods.size(); ++k)
        methods[table.methods[k]] = {{"V", r.v[k]},
                                     {"theta_deg", r.theta[k] * kDegrees},
                                     {"abs_err_V", r.err_v[k]},
                                     {"abs_err_theta_deg", r.err_theta[k] * kDegrees}};
      row["methods"] = methods;
      rows.push_back(row);
    }
    j["rows"] = rows;
    return j.dump(2) + "\n";
  }
  std::string out = manifest_csv(manifest);
  out += "scope,bus,true_V,true_theta_deg";
  for (const std::string& m : table.methods)
    out += fmt::format(",{0}_V,{0}_theta_deg,{0}_abs_err_V,{0}_abs_err_theta_deg", m);
  out += "\n";
  for (const ResultRow& r : table.rows) {
    out += fmt::format("{},{},{},{}", r.scope, r.bus, number(r.true_v),
                       number(r.true_theta * kDegrees));
    for (std::size_t k = 0; k < table.methods.size(); ++k)
      out += fmt::format(",{},{},{},{}", number(r.v[k]), number(r.theta[k] * kDegrees),
                         number(r.err_v[k]), number(r.err_theta[k] * kDegrees));
    out += "\n";
  }
  return out;
}

std::string render_summary(const MonteCarloSummary& s, const Manifest& manifest,
                           ResultFormat format) {
  if (format == ResultFormat::Json) {
    nlohmann::ordered_json j;
    j["manifest"] = manifest_json(manifest);
    j["trials"] = s.trials;
    j["methods"] = s.labels;
    nlohmann::ordered_json buses = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.buses.size(); ++i) {
      nlohmann::ordered_json row;
      row["bus"] = s.buses[i];
      for (std::size_t k = 0; k < s.labels.size(); ++k)
        row[s.labels[k]] = {
            {"mean_abs_err_V", s.mean_dv[k](static_cast<Eigen::Index>(i))},
            {"mean_abs_err_theta_deg",
             s.mean_dtheta[k](static_cast<Eigen::Index>(i)) * kDegrees}};
      buses.push_back(row);
    }
    j["buses"] = buses;
    nlohmann::ordered_json trials = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < s.labels.size(); ++k)
      trials[s.labels[k]] = std::vector<double>(s.trial_error[k].data(),
                                                s.trial_error[k].data() + s.trial_error[k].size());
    j["trial_mean_error"] = trials;
    return j.dump(2) + "\n";
  }
  std::string out = manifest_csv(manifest);
  out += "bus";
  for (const std::string& m : s.labels)
    out += fmt::format(",{0}_mean_abs_err_V,{0}_mean_abs_err_theta_deg", m);
  out += "\n";
  for (std::size_t i = 0; i < s.buses.size(); ++i) {
    out += fmt::format("{}", s.buses[i]);
    for (std::size_t k = 0; k < s.labels.size(); ++k)
      out += fmt::format(",{},{}", number(s.mean_dv[k](static_cast<Eigen::Index>(i))),
                         number(s.mean_dtheta[k](static_cast<Eigen::Index>(i)) * kDegrees));
    out += "\n";
  }
  return out;
}

std::string render_state(const StateVector& state, const Manifest& manifest,
                         ResultFormat format) {
  if (format == ResultFormat::Json) {
    nlohmann::ordered_json j;
    j["manifest"] = manifest_json(manifest);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < state.size(); ++i)
      rows.push_back({{"bus", state.buses[static_cast<std::size_t>(i)]},
                      {"V", state.first(i)},
                      {"theta_deg", state.second(i) * kDegrees}});
    j["buses"] = rows;
    return j.dump(2) + "\n";
  }
  std::string out = manifest_csv(manifest);
  out += "bus,V,theta_deg\n";
  for (Eigen::Index i = 0; i < state.size(); ++i)
    out += fmt::format("{},{},{}\n", state.buses[static_cast<std::size_t>(i)],
                       number(state.first(i)), number(state.second(i) * kDegrees));
  return out;
}

std::string render_measurements(const PowerNetwork& net, const MeasurementSet& set,
                                const Manifest& manifest, ResultFormat format) {
  const auto endpoints = [&](const Measurement& x) -> std::pair<int, int> {
    if (!x.branch) return {0, 0};
    const Branch& br = net.branches()[*x.branch];
    return {br.from, br.to};
  };
  if (format == ResultFormat::Json) {
    nlohmann::ordered_json j;
    j["manifest"] = manifest_json(manifest);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const Measurement& x : set.items) {
      const auto [from, to] = endpoints(x);
      rows.push_back({{"kind", std::string(to_string(x.kind))},
                      {"bus", x.bus},
                      {"from", from},
                      {"to", to},
                      {"value", x.value},
                      {"sigma", x.sigma}});
    }
    j["measurements"] = rows;
    return j.dump(2) + "\n";
  }
  std::string out = manifest_csv(manifest);
  out += "kind,bus,from,to,value,sigma\n";
  for (const Measurement& x : set.items) {
    const auto [from, to] = endpoints(x);
    out += fmt::format("{},{},{},{},{},{}\n", to_string(x.kind), x.bus, from, to,
                       number(x.value), number(x.sigma));
  }
  return out;
}

void write_results(const std::filesystem::path& path, const ResultTable& table,
                   const Manifest& manifest, ResultFormat format) {
  write_text(path, render_results(table, manifest, format));
}

}  // namespace gridstate
