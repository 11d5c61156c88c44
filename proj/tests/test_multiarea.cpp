#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gridstate/errors.hpp"
#include "gridstate/multiarea.hpp"
#include "support.hpp"

using namespace gridstate;
using namespace gridstate::testing;

namespace {

PipelineOptions robust_options(double scale = 0.05) {
  PipelineOptions o;
  o.robust = true;
  o.lambda = LambdaStrategy::approx(1.0);
  o.uncertainty = {scale, scale, 0.0};
  return o;
}

double max_state_difference(const StateVector& a, const StateVector& b) {
  REQUIRE(a.buses == b.buses);
  return std::max(max_abs((a.first - b.first).eval()), max_abs((a.second - b.second).eval()));
}

// Traditional estimate of the whole network followed by one hybrid solve,
// written out step by step.
StateVector central_by_hand(const Scenario& s, const TrialInput& t, const PipelineOptions& o) {
  std::vector<int> all;
  for (const Bus& b : s.net.buses()) all.push_back(b.id);
  const EstimationResult tse = estimate_state(s.net, t.scada, all, s.net.slack_bus());
  REQUIRE(tse.converged);
  const HybridModel m = build_hybrid_model(tse, t.pmu, s.net);
  const Eigen::MatrixXd R = m.W.inverse();
  Eigen::VectorXd x;
  if (o.robust) {
    const UncertaintyStructure u =
        pmu_uncertainty(m, o.uncertainty.s0, o.uncertainty.e0, o.uncertainty.ez0);
    x = bdu_solve({m.z, m.H, R, u}, o.lambda).x;
  } else {
    x = (m.H.transpose() * R * m.H).ldlt().solve(m.H.transpose() * R * m.z);
  }
  return rect_to_polar(hybrid_state(m, x)).state;
}

}  // namespace

TEST_CASE("one area reduces to the central estimator") {
  Scenario s = ieee30_scenario();
  const PartitionSpec spec = parse_partition(read_text(data_path("ieee30_single.part")));
  const AreaPartition single = partition(s.net, spec.assignment, spec.references);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TrialInput t = draw_trial(s, seed);
    for (bool robust : {true, false}) {
      PipelineOptions o = robust_options();
      o.robust = robust;
      const GlobalResult two = run_two_level(s.net, single, t.scada, t.pmu, o);
      CHECK_FALSE(two.coordinator.has_value());
      CHECK(max_state_difference(two.estimate, central_by_hand(s, t, o)) < 1e-8);
      const GlobalResult central = run_central(s.net, t.scada, t.pmu, 1, o);
      CHECK(max_state_difference(two.estimate, central.estimate) < 1e-8);
    }
  }
}

TEST_CASE("three areas recover the load flow from exact data") {
  const Scenario s = ieee30_scenario();
  const TrialInput t = draw_trial(s, 9, 0.0);
  for (bool robust : {true, false}) {
    PipelineOptions o = robust_options(0.0);
    o.robust = robust;
    const GlobalResult g = run_two_level(s.net, s.part, t.scada, t.pmu, o);
    REQUIRE(g.coordinator.has_value());
    CHECK(g.locals.size() == 3);
    CHECK(g.estimate.size() == 30);
    CHECK(g.coordinator->offsets.size() == 3);
    CHECK(g.coordinator->offsets(0) == 0.0);
    const BusErrors e = compute_errors(g.estimate, s.truth);
    CHECK(e.dv.maxCoeff() < 1e-6);
    CHECK(e.dtheta.maxCoeff() < 1e-6);
  }
}

TEST_CASE("zero uncertainty scales give the plain estimate") {
  const Scenario s = ieee30_scenario();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrialInput t = draw_trial(s, seed);
    PipelineOptions robust = robust_options(0.0);
    robust.perturbation_seed = seed;
    PipelineOptions plain = robust;
    plain.robust = false;
    for (const LambdaStrategy st : {LambdaStrategy::approx(1.0), LambdaStrategy::exact()}) {
      robust.lambda = st;
      const GlobalResult a = run_two_level(s.net, s.part, t.scada, t.pmu, robust);
      const GlobalResult b = run_two_level(s.net, s.part, t.scada, t.pmu, plain);
      CHECK(max_state_difference(a.estimate, b.estimate) < 1e-10);
    }
  }
}

TEST_CASE("parallel and serial runs agree bit for bit") {
  const Scenario s = ieee30_scenario();
  const TrialInput t = draw_trial(s, 17);
  PipelineOptions o = robust_options();
  o.perturbation_seed = 17;
  const GlobalResult par = run_two_level(s.net, s.part, t.scada, t.pmu, o);
  o.parallel = false;
  const GlobalResult ser = run_two_level(s.net, s.part, t.scada, t.pmu, o);
  CHECK(max_state_difference(par.estimate, ser.estimate) == 0.0);
  const GlobalResult again = run_two_level(s.net, s.part, t.scada, t.pmu, o);
  CHECK(max_state_difference(again.estimate, ser.estimate) == 0.0);
  CHECK(par.coordinator->lambda == ser.coordinator->lambda);
}

TEST_CASE("the perturbation moves the estimate") {
  const Scenario s = ieee30_scenario();
  const TrialInput t = draw_trial(s, 23);
  PipelineOptions o = robust_options();
  const GlobalResult clean = run_two_level(s.net, s.part, t.scada, t.pmu, o);
  o.perturbation_seed = 23;
  const GlobalResult perturbed = run_two_level(s.net, s.part, t.scada, t.pmu, o);
  CHECK(max_state_difference(clean.estimate, perturbed.estimate) > 1e-6);
}

TEST_CASE("boundary measurement selection") {
  const Scenario s = ieee30_scenario();
  const TrialInput t = draw_trial(s, 1);
  const MeasurementSet b = boundary_measurements(s.net, s.part, t.scada);
  const std::vector<int> bnd = s.part.boundary_buses();
  std::size_t injections = 0;
  for (const Measurement& m : b.items) {
    if (m.kind == MeasurementClass::PInjection || m.kind == MeasurementClass::QInjection) {
      ++injections;
      CHECK(std::binary_search(bnd.begin(), bnd.end(), m.bus));
    } else {
      REQUIRE(m.branch.has_value());
      const Branch& br = s.net.branches()[*m.branch];
      CHECK(s.part.area_of(br.from) != s.part.area_of(br.to));
    }
  }
  CHECK(injections == 2 * (3 + 5 + 3));

  const MeasurementSet p = boundary_pmus(s.part, t.pmu);
  for (const Measurement& m : p.items) CHECK(std::binary_search(bnd.begin(), bnd.end(), m.bus));
  CHECK(p.size() == t.pmu.size());
}

TEST_CASE("failures name the area") {
  const Scenario s = ieee30_scenario();
  const TrialInput t = draw_trial(s, 1);
  MeasurementSet sparse;
  std::size_t kept = 0;
  for (const Measurement& m : t.scada.items)
    if (s.part.area_of(m.bus) != 1 || kept++ < 3) sparse.items.push_back(m);
  try {
    run_two_level(s.net, s.part, sparse, t.pmu, robust_options());
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("area 2") != std::string::npos);
    CHECK(what.find("area 1") == std::string::npos);
  }
  CHECK_THROWS_AS(split_measurements(s.net, s.part, t.pmu, t.pmu), PreconditionError);
  CHECK_THROWS_AS(split_measurements(s.net, s.part, t.scada, t.scada), PreconditionError);
}

TEST_CASE("error metric") {
  using std::numbers::pi;
  CHECK(wrap_angle(pi, -pi) == doctest::Approx(0.0));
  CHECK(wrap_angle(3.0, -3.0) == doctest::Approx(6.0 - 2.0 * pi));
  CHECK(wrap_angle(-pi, 0.0) == doctest::Approx(pi));

  const Scenario s = ieee30_scenario();
  // The same state in another frame has zero error once re-referenced.
  StateVector shifted = s.truth;
  const Eigen::Index k = shifted.index_of(15);
  shifted.second.array() -= s.truth.second(k);
  shifted.reference_bus = 15;
  const BusErrors e = compute_errors(shifted, s.truth);
  CHECK(e.dv.maxCoeff() < 1e-15);
  CHECK(e.dtheta.maxCoeff() < 1e-14);

  StateVector off = s.truth;
  off.first(3) += 0.01;
  off.second(5) -= 0.02;
  const BusErrors f = compute_errors(off, s.truth);
  CHECK(f.dv(3) == doctest::Approx(0.01));
  CHECK(f.dtheta(5) == doctest::Approx(0.02));
}
