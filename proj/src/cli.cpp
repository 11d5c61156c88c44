#include "gridstate/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "gridstate/caseio.hpp"
#include "gridstate/errors.hpp"
#include "gridstate/experiment.hpp"
#include "gridstate/powerflow.hpp"

namespace gridstate {
namespace {

namespace fs = std::filesystem;

constexpr double kDegrees = 180.0 / std::numbers::pi;

struct Flags {
  std::string case_file, partition_file, plan_file, config_file;
  std::string mode, uncertainty, out_dir, format = "csv";
  std::uint64_t seed = 1;
  int trials = 1;
  double tol = 0.0;
  double mu = 1.0;
  bool lambda_exact = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* mu_opt = nullptr;
};

struct Fixture {
  std::string name;
  std::string text;
};

/// Everything a command needs after config, flags and files are merged.
struct Inputs {
  ExperimentConfig config;
  std::string config_text;
  Fixture case_fixture, partition_fixture, plan_fixture;
};

std::string resolve(const std::string& path, const fs::path& base) {
  if (path.empty()) return path;
  const fs::path p(path);
  return p.is_absolute() || base.empty() ? path : (base / p).string();
}

ResultFormat parse_format(const std::string& f) {
  if (f == "csv") return ResultFormat::Csv;
  if (f == "json") return ResultFormat::Json;
  throw ConfigError(fmt::format("unknown format '{}', expected csv or json", f));
}

std::string extension(ResultFormat f) { return f == ResultFormat::Json ? "json" : "csv"; }

UncertaintyScales parse_uncertainty(const std::string& text, double ez0) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    char* end = nullptr;
    const double x = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(x) || x < 0.0)
      throw ConfigError(fmt::format("--uncertainty expects s0,e0 >= 0, got '{}'", text));
    v.push_back(x);
  }
  if (v.size() == 1) return {v[0], v[0], ez0};
  if (v.size() == 2) return {v[0], v[1], ez0};
  throw ConfigError(fmt::format("--uncertainty expects s0,e0, got '{}'", text));
}

ExperimentConfig load_config(const std::string& path, std::string& text) {
  if (path.empty()) {
    text.clear();
    return parse_config("");
  }
  text = read_text(path);
  ExperimentConfig c = parse_config(text);
  const fs::path base = fs::path(path).parent_path();
  c.case_file = resolve(c.case_file, base);
  c.partition_file = resolve(c.partition_file, base);
  c.plan_file = resolve(c.plan_file, base);
  return c;
}

Inputs gather(const Flags& f, bool need_partition, bool need_plan) {
  Inputs in;
  in.config = load_config(f.config_file, in.config_text);
  ExperimentConfig& c = in.config;
  if (!f.case_file.empty()) c.case_file = f.case_file;
  if (!f.partition_file.empty()) c.partition_file = f.partition_file;
  if (!f.plan_file.empty()) c.plan_file = f.plan_file;
  if (!f.mode.empty()) c.mode = f.mode;
  if (f.seed_opt && f.seed_opt->count()) c.seed = f.seed;
  if (f.trials_opt && f.trials_opt->count()) c.trials = f.trials;
  if (f.tol_opt && f.tol_opt->count()) c.epsilon = f.tol;
  if (f.mu_opt && f.mu_opt->count()) c.mu = f.mu;
  if (f.lambda_exact) c.lambda_exact = true;
  if (!f.uncertainty.empty()) c.uncertainty = parse_uncertainty(f.uncertainty, c.uncertainty.ez0);

  if (c.mode != "central-robust" && c.mode != "central-wls" &&
      c.mode != "multiarea-robust" && c.mode != "multiarea-wls")
    throw ConfigError(fmt::format("unknown mode '{}'", c.mode));
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  if (!(c.epsilon > 0.0)) throw ConfigError("tolerance must be positive");
  if (!(c.mu >= 0.0)) throw ConfigError("mu must be non-negative");

  if (c.case_file.empty()) throw ConfigError("no case file given (--case or config 'case')");
  in.case_fixture = {fs::path(c.case_file).filename().string(), read_text(c.case_file)};
  if (need_partition) {
    if (c.partition_file.empty())
      throw ConfigError("no partition file given (--partition or config 'partition')");
    in.partition_fixture = {fs::path(c.partition_file).filename().string(),
                            read_text(c.partition_file)};
  }
  if (need_plan) {
    if (c.plan_file.empty()) throw ConfigError("no plan file given (--plan or config 'plan')");
    in.plan_fixture = {fs::path(c.plan_file).filename().string(), read_text(c.plan_file)};
  }
  return in;
}

AreaPartition load_partition(const PowerNetwork& net, const Inputs& in) {
  const PartitionSpec spec = parse_partition(in.partition_fixture.text);
  return partition(net, spec.assignment, spec.references);
}

Manifest make_manifest(const std::string& command, const Inputs& in) {
  Manifest m;
  m.command = command;
  m.config_hash = content_hash(in.config_text);
  m.seed = in.config.seed;
  m.timestamp = manifest_timestamp();
  for (const Fixture* f : {&in.case_fixture, &in.partition_fixture, &in.plan_fixture})
    if (!f->name.empty()) m.fixtures.emplace_back(f->name, content_hash(f->text));
  return m;
}

PipelineOptions pipeline_options(const ExperimentConfig& c, bool robust) {
  PipelineOptions o;
  o.wls.tolerance = c.epsilon;
  o.wls.max_iterations = c.k_limit;
  o.hybrid.diagonal_tse_covariance = c.diagonal_tse_covariance;
  o.robust = robust;
  o.lambda = c.lambda_exact ? LambdaStrategy::exact() : LambdaStrategy::approx(c.mu);
  o.uncertainty = c.uncertainty;
  o.reuse_boundary_measurements = c.reuse_boundary_measurements;
  return o;
}

MethodSpec method_for(const std::string& mode, const ExperimentConfig& c) {
  MethodSpec m;
  m.label = mode;
  m.scope = mode.starts_with("central") ? MethodSpec::Scope::Central
                                        : MethodSpec::Scope::MultiArea;
  m.options = pipeline_options(c, mode.ends_with("robust"));
  return m;
}

std::string counterpart(const std::string& mode) {
  const std::string scope = mode.substr(0, mode.find('-'));
  return mode.ends_with("robust") ? scope + "-wls" : scope + "-robust";
}

void emit(const Flags& f, const std::string& file, const std::string& content,
          std::ostream& out) {
  if (f.out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(f.out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", f.out_dir, ec.message()));
  const fs::path path = fs::path(f.out_dir) / file;
  write_text(path, content);
  out << "wrote " << path.string() << "\n";
}

void log_warnings(const ExperimentConfig& c) {
  for (const std::string& w : c.warnings) spdlog::warn("{}", w);
}

int cmd_powerflow(const Flags& f, std::ostream& out) {
  Inputs in = gather(f, false, false);
  const ResultFormat format = parse_format(f.format);
  PowerflowOptions opts;
  if (f.tol_opt && f.tol_opt->count()) {
    if (!(f.tol > 0.0)) throw ConfigError("--tol must be positive");
    opts.tolerance = f.tol;
  }
  const PowerNetwork net = parse_case(in.case_fixture.text);
  const PowerflowResult pf = run_powerflow(net, opts);
  out << fmt::format("converged in {} iterations, max mismatch {:.3e} p.u.\n",
                     pf.iterations, pf.max_mismatch);
  Manifest m = make_manifest("powerflow", in);
  m.notes.emplace_back("iterations", std::to_string(pf.iterations));
  m.notes.emplace_back("max_mismatch", fmt::format("{:.6e}", pf.max_mismatch));
  const std::string body = render_state(pf.state, m, format);
  emit(f, "powerflow." + extension(format), body, out);
  return kExitOk;
}

int cmd_synthesize(const Flags& f, std::ostream& out) {
  Inputs in = gather(f, false, true);
  const ResultFormat format = parse_format(f.format);
  const PowerNetwork net = parse_case(in.case_fixture.text);
  const MeasurementPlan plan = parse_plan(in.plan_fixture.text);
  const PowerflowResult pf = run_powerflow(net);
  const MeasurementSet set = synthesize(net, pf.state, plan, in.config.sigmas, in.config.seed);
  const Manifest m = make_manifest("synthesize", in);
  const std::string body = render_measurements(net, set, m, format);
  out << fmt::format("synthesized {} measurements with seed {}\n", set.size(), m.seed);
  emit(f, "measurements." + extension(format), body, out);
  return kExitOk;
}

Scenario build_scenario(const Inputs& in, ExperimentConfig& config) {
  PowerNetwork net = parse_case(in.case_fixture.text);
  AreaPartition part = load_partition(net, in);
  MeasurementPlan plan = parse_plan(in.plan_fixture.text);
  check_redundancy(config, net, part, plan);
  log_warnings(config);
  return make_scenario(std::move(net), std::move(part), std::move(plan), config.sigmas);
}

void print_scope_summary(const ResultTable& table, std::ostream& out) {
  struct Acc {
    double dv = 0.0, dtheta = 0.0;
    int n = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (const ResultRow& r : table.rows) {
    if (!acc.contains(r.scope)) order.push_back(r.scope);
    Acc& a = acc[r.scope];
    a.dv += r.err_v[0];
    a.dtheta += r.err_theta[0];
    ++a.n;
  }
  out << fmt::format("{:<12} {:>6} {:>14} {:>18}\n", "scope", "buses", "mean |dV| pu",
                     "mean |dtheta| deg");
  for (const std::string& s : order) {
    const Acc& a = acc[s];
    out << fmt::format("{:<12} {:>6} {:>14.6e} {:>18.6e}\n", s, a.n, a.dv / a.n,
                       a.dtheta / a.n * kDegrees);
  }
}

int cmd_estimate(const Flags& f, std::ostream& out) {
  Inputs in = gather(f, true, true);
  const ResultFormat format = parse_format(f.format);
  ExperimentConfig& c = in.config;
  const Scenario s = build_scenario(in, c);
  Manifest m = make_manifest("estimate", in);
  m.notes.emplace_back("mode", c.mode);
  m.notes.emplace_back("trials", std::to_string(c.trials));
  m.notes.emplace_back("uncertainty", fmt::format("{:.6g},{:.6g},{:.6g}", c.uncertainty.s0,
                                                  c.uncertainty.e0, c.uncertainty.ez0));
  m.notes.emplace_back("lambda", c.lambda_exact ? std::string("exact")
                                                : fmt::format("approx mu={:.6g}", c.mu));
  for (const std::string& w : c.warnings) m.notes.emplace_back("warning", w);

  if (c.trials == 1) {
    // A single run estimates from the measurements as drawn; sampled model
    // perturbations belong to the Monte-Carlo runs.
    m.notes.emplace_back("perturbation", "none");
    const TrialInput trial = draw_trial(s, c.seed);
    const MethodSpec spec = method_for(c.mode, c);
    const GlobalResult g =
        spec.scope == MethodSpec::Scope::Central
            ? run_central(s.net, trial.scada, trial.pmu, s.net.slack_bus(), spec.options)
            : run_two_level(s.net, s.part, trial.scada, trial.pmu, spec.options);
    GlobalResult labelled = g;
    labelled.method = c.mode;
    const ResultTable table = tabulate({labelled}, s.truth, s.part);
    print_scope_summary(table, out);
    emit(f, "estimate." + extension(format), render_results(table, m, format), out);
    return kExitOk;
  }

  m.notes.emplace_back("perturbation", "unit-norm Delta per trial, seed + t");
  const std::vector<MethodSpec> methods = {method_for(c.mode, c),
                                           method_for(counterpart(c.mode), c)};
  const MonteCarloSummary summary = monte_carlo(s, methods, c.trials, c.seed);
  out << fmt::format("{} trials, seeds {}..{}\n", c.trials, c.seed,
                     c.seed + static_cast<std::uint64_t>(c.trials) - 1);
  out << fmt::format("{:<18} {:>14} {:>18} {:>16}\n", "method", "mean |dV| pu",
                     "mean |dtheta| deg", "mean error");
  for (std::size_t k = 0; k < methods.size(); ++k)
    out << fmt::format("{:<18} {:>14.6e} {:>18.6e} {:>16.6e}\n", summary.labels[k],
                       summary.mean_dv[k].mean(), summary.mean_dtheta[k].mean() * kDegrees,
                       summary.trial_error[k].mean());
  emit(f, "montecarlo." + extension(format), render_summary(summary, m, format), out);
  return kExitOk;
}

int cmd_compare(const Flags& f, const std::string& config_a, const std::string& config_b,
                std::ostream& out) {
  Flags fa = f;
  fa.config_file = config_a;
  Flags fb = f;
  fb.config_file = config_b;
  Inputs a = gather(fa, true, true);
  Inputs b = gather(fb, true, true);
  const ResultFormat format = parse_format(f.format);
  if (content_hash(a.case_fixture.text) != content_hash(b.case_fixture.text))
    throw ConfigError(fmt::format("configs use different cases ('{}' vs '{}')",
                                  a.config.case_file, b.config.case_file));
  const int trials = a.config.trials;
  const std::uint64_t seed = a.config.seed;
  if (b.config.trials != trials || b.config.seed != seed)
    spdlog::info("compare uses trials={} seed={} for both configs", trials, seed);

  const Scenario sa = build_scenario(a, a.config);
  const Scenario sb = build_scenario(b, b.config);
  const MonteCarloSummary ra = monte_carlo(sa, {method_for(a.config.mode, a.config)}, trials, seed);
  const MonteCarloSummary rb = monte_carlo(sb, {method_for(b.config.mode, b.config)}, trials, seed);

  MonteCarloSummary merged;
  merged.trials = trials;
  merged.buses = ra.buses;
  merged.labels = {"A_" + a.config.mode, "B_" + b.config.mode};
  merged.mean_dv = {ra.mean_dv[0], rb.mean_dv[0]};
  merged.mean_dtheta = {ra.mean_dtheta[0], rb.mean_dtheta[0]};
  merged.trial_error = {ra.trial_error[0], rb.trial_error[0]};

  const double rate = win_rate(ra.trial_error[0], rb.trial_error[0]);
  const double max_diff =
      std::max((ra.mean_dv[0] - rb.mean_dv[0]).cwiseAbs().maxCoeff(),
               (ra.mean_dtheta[0] - rb.mean_dtheta[0]).cwiseAbs().maxCoeff());

  Manifest m = make_manifest("compare", a);
  m.config_hash = content_hash(a.config_text) + "," + content_hash(b.config_text);
  m.seed = seed;
  m.notes.emplace_back("trials", std::to_string(trials));
  m.notes.emplace_back("win_rate_A_le_B", fmt::format("{:.6f}", rate));
  m.notes.emplace_back("max_abs_difference", fmt::format("{:.6e}", max_diff));
  if (trials == 1)
    m.notes.emplace_back("statistics", "single trial; not a statistical comparison");

  out << fmt::format("A: {}  mean error {:.6e}\n", merged.labels[0], ra.trial_error[0].mean());
  out << fmt::format("B: {}  mean error {:.6e}\n", merged.labels[1], rb.trial_error[0].mean());
  out << fmt::format("win rate (A <= B): {:.4f} over {} paired trials\n", rate, trials);
  out << fmt::format("max per-bus difference: {:.6e}\n", max_diff);
  if (trials == 1) out << "note: single trial; not a statistical comparison\n";
  emit(f, "compare." + extension(format), render_summary(merged, m, format), out);
  return kExitOk;
}

void configure_logging() {
  static const bool done = [] {
    auto logger = spdlog::stderr_color_mt("gridstate");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    return true;
  }();
  (void)done;
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("GRIDSTATE_LOG")) {
    level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off")
      level = spdlog::level::warn;
  }
  spdlog::set_level(level);
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::Validation: return kExitValidation;
    case Error::Category::Numerical: return kExitNumerical;
    case Error::Category::Io: return kExitIo;
  }
  return kExitNumerical;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Two-level robust multi-area power-system state estimation", "gridstate"};
  app.require_subcommand(1);
  Flags f;
  std::string config_a, config_b;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--case", f.case_file, "network case file");
    sub->add_option("--config", f.config_file, "key = value configuration file");
    sub->add_option("--out", f.out_dir, "directory for result files");
    sub->add_option("--format", f.format, "result file format")
        ->check(CLI::IsMember({"csv", "json"}));
    return sub->add_option("--seed", f.seed, "noise and perturbation seed");
  };
  const auto add_estimation = [&](CLI::App* sub) {
    sub->add_option("--partition", f.partition_file, "area partition file");
    sub->add_option("--plan", f.plan_file, "measurement plan file");
    sub->add_option("--mode", f.mode, "central-robust, central-wls, multiarea-robust, multiarea-wls");
    f.trials_opt = sub->add_option("--trials", f.trials, "Monte-Carlo trials");
    f.tol_opt = sub->add_option("--tol", f.tol, "Gauss-Newton tolerance on max |dx|");
    f.mu_opt = sub->add_option("--mu", f.mu, "approximate lambda factor");
    sub->add_flag("--lambda-exact", f.lambda_exact, "minimise G(lambda) instead of (1+mu)L");
    sub->add_option("--uncertainty", f.uncertainty, "s0,e0 uncertainty scales");
  };

  CLI::App* pf = app.add_subcommand("powerflow", "solve the load flow of a case");
  CLI::Option* pf_seed = add_common(pf);
  CLI::Option* pf_tol = pf->add_option("--tol", f.tol, "mismatch tolerance, p.u.");

  CLI::App* syn = app.add_subcommand("synthesize", "noisy measurements from a load-flow run");
  CLI::Option* syn_seed = add_common(syn);
  syn->add_option("--plan", f.plan_file, "measurement plan file");

  CLI::App* est = app.add_subcommand("estimate", "run an estimation pipeline");
  CLI::Option* est_seed = add_common(est);
  add_estimation(est);

  CLI::App* cmp = app.add_subcommand("compare", "paired-seed comparison of two configs");
  cmp->add_option("--config-a", config_a, "first configuration")->required();
  cmp->add_option("--config-b", config_b, "second configuration")->required();
  cmp->add_option("--out", f.out_dir, "directory for result files");
  cmp->add_option("--format", f.format, "result file format")
      ->check(CLI::IsMember({"csv", "json"}));
  CLI::Option* cmp_seed = cmp->add_option("--seed", f.seed, "first trial seed");
  CLI::Option* cmp_trials = cmp->add_option("--trials", f.trials, "paired trials");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (CLI::App* sub : app.get_subcommands()) out << sub->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (pf->parsed()) {
      f.seed_opt = pf_seed;
      f.tol_opt = pf_tol;
      return cmd_powerflow(f, out);
    }
    if (syn->parsed()) {
      f.seed_opt = syn_seed;
      return cmd_synthesize(f, out);
    }
    if (est->parsed()) {
      f.seed_opt = est_seed;
      return cmd_estimate(f, out);
    }
    f.seed_opt = cmp_seed;
    f.trials_opt = cmp_trials;
    return cmd_compare(f, config_a, config_b, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << fmt::format(" (max mismatch {:.3e})", e.final_mismatch())
        << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gridstate
