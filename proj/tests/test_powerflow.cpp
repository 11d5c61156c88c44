#include "doctest.h"

#include "gridstate/errors.hpp"
#include "gridstate/powerflow.hpp"
#include "support.hpp"

using namespace gridstate;
using namespace gridstate::testing;

namespace {

// Complex injections S_i = V_i conj(I_i), with I_i summed branch by branch
// from the two-port of each branch plus the bus shunt.
Eigen::VectorXcd injections(const PowerNetwork& net, const StateVector& s) {
  Eigen::VectorXcd v(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) v(i) = std::polar(s.first(i), s.second(i));
  Eigen::VectorXcd current = Eigen::VectorXcd::Zero(s.size());
  for (const Branch& br : net.branches()) {
    const BranchAdmittance y = branch_admittance(br);
    const auto f = static_cast<Eigen::Index>(net.index_of(br.from));
    const auto t = static_cast<Eigen::Index>(net.index_of(br.to));
    current(f) += y.ff * v(f) + y.ft * v(t);
    current(t) += y.tf * v(f) + y.tt * v(t);
  }
  for (Eigen::Index i = 0; i < s.size(); ++i)
    current(i) += net.shunt(static_cast<std::size_t>(i)) * v(i);
  return v.cwiseProduct(current.conjugate());
}

double independent_mismatch(const PowerNetwork& net, const StateVector& s) {
  const Eigen::VectorXcd inj = injections(net, s);
  double worst = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Bus& b = net.buses()[i];
    if (b.kind == BusKind::Slack) continue;
    const auto k = static_cast<Eigen::Index>(i);
    worst = std::max(worst, std::abs(net.p_scheduled(i) - inj(k).real()));
    if (b.kind == BusKind::Load)
      worst = std::max(worst, std::abs(net.q_scheduled(i) - inj(k).imag()));
  }
  return worst;
}

}  // namespace

TEST_CASE("30-bus load flow") {
  const PowerNetwork net = ieee30();
  const PowerflowResult pf = run_powerflow(net, {1e-8, 10});
  CHECK(pf.iterations <= 10);
  CHECK(pf.max_mismatch < 1e-8);
  CHECK(independent_mismatch(net, pf.state) < 1e-8);
  CHECK(max_mismatch(net, pf.state) == doctest::Approx(pf.max_mismatch).epsilon(1e-6));

  SUBCASE("set points are held") {
    for (std::size_t i = 0; i < net.size(); ++i) {
      const Bus& b = net.buses()[i];
      const auto k = static_cast<Eigen::Index>(i);
      if (b.kind != BusKind::Load) CHECK(pf.state.first(k) == doctest::Approx(b.vm));
    }
    CHECK(pf.state.second(static_cast<Eigen::Index>(net.index_of(net.slack_bus()))) ==
          doctest::Approx(net.bus(net.slack_bus()).va));
  }
  SUBCASE("power balance: injections sum to branch and shunt losses") {
    const Eigen::VectorXcd inj = injections(net, pf.state);
    Complex losses = 0.0;
    for (const Branch& br : net.branches()) {
      const BranchAdmittance y = branch_admittance(br);
      const auto f = static_cast<Eigen::Index>(net.index_of(br.from));
      const auto t = static_cast<Eigen::Index>(net.index_of(br.to));
      const Complex vf = pf.state.phasor(f);
      const Complex vt = pf.state.phasor(t);
      losses += vf * std::conj(y.ff * vf + y.ft * vt) + vt * std::conj(y.tf * vf + y.tt * vt);
    }
    for (Eigen::Index i = 0; i < pf.state.size(); ++i)
      losses += std::norm(pf.state.phasor(i)) *
                std::conj(net.shunt(static_cast<std::size_t>(i)));
    CHECK(std::abs(inj.sum() - losses) < 1e-10);
    // The case's printed losses are close to 17.6 MW / 100 MVA.
    CHECK(losses.real() == doctest::Approx(0.176).epsilon(0.02));
  }
  SUBCASE("the Newton system vanishes at the solution") {
    const PowerflowSystem sys = powerflow_system(net, build_ybus(net), pf.state);
    CHECK(sys.residual.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sys.jacobian.rows() == sys.jacobian.cols());
  }
}

TEST_CASE("Newton Jacobian matches finite differences") {
  const PowerNetwork net = ieee30();
  const AdmittanceMatrix y = build_ybus(net);
  StateVector s = run_powerflow(net).state;
  const PowerflowSystem base = powerflow_system(net, y, s);
  std::vector<std::pair<bool, Eigen::Index>> columns;  // (is angle, bus position)
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.buses()[i].kind != BusKind::Slack) columns.push_back({true, static_cast<Eigen::Index>(i)});
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.buses()[i].kind == BusKind::Load) columns.push_back({false, static_cast<Eigen::Index>(i)});
  REQUIRE(static_cast<Eigen::Index>(columns.size()) == base.jacobian.cols());
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    StateVector plus = s, minus = s;
    auto& vp = columns[c].first ? plus.second : plus.first;
    auto& vm = columns[c].first ? minus.second : minus.first;
    vp(columns[c].second) += h;
    vm(columns[c].second) -= h;
    const Eigen::VectorXd fd = (powerflow_system(net, y, plus).residual -
                                powerflow_system(net, y, minus).residual) / (2 * h);
    worst = std::max(worst, (fd - base.jacobian.col(static_cast<Eigen::Index>(c))).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("two-bus load flow against the closed form") {
  const PowerNetwork net = parse_case(read_text(data_path("two_bus.case")));
  const PowerflowResult pf = run_powerflow(net);
  // With V1 = 1∠0 the receiving voltage satisfies V2 conj(I2) = −S_load,
  // I2 = y_tf V1 + y_tt V2. Check that relation directly.
  const BranchAdmittance y = branch_admittance(net.branches()[0]);
  const Complex v1 = pf.state.phasor(0);
  const Complex v2 = pf.state.phasor(1);
  const Complex s2 = v2 * std::conj(y.tf * v1 + y.tt * v2);
  CHECK(std::abs(s2 - Complex(-0.5, -0.2)) < 1e-8);
  CHECK(std::abs(v2) < 1.0);
  CHECK(std::arg(v2) < 0.0);
}

TEST_CASE("load flow failures") {
  const PowerNetwork heavy = parse_case(
      "BUS 1 slack 1 0 0 0 0 0\nBUS 2 load 1 0 5000 2000 0 0\nBRANCH 1 2 0.01 0.1 0 1 0\n");
  try {
    run_powerflow(heavy, {1e-8, 10});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.final_mismatch() > 1e-8);
    CHECK(e.category() == Error::Category::Numerical);
  }
  const PowerNetwork island =
      parse_case("BUS 1 slack 1 0 0 0 0 0\nBUS 2 load 1 0 10 0 0 0\n");
  CHECK_THROWS_AS(run_powerflow(island), StructuralError);
}
