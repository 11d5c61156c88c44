#include "doctest.h"

#include <random>

#include "gridstate/errors.hpp"
#include "gridstate/wls.hpp"
#include "support.hpp"

using namespace gridstate;
using namespace gridstate::testing;

TEST_CASE("linear model: one step, then a confirming step") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd A = random_matrix(8, 3, rng);
  const Eigen::VectorXd z = random_matrix(8, 1, rng);
  const Eigen::MatrixXd W = random_spd(8, rng);
  const NonlinearModel model{[&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x; },
                             [&](const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; }};
  const GaussNewtonResult r = gauss_newton(model, z, W, Eigen::VectorXd::Zero(3));
  CHECK(r.converged);
  CHECK(r.iterations == 2);
  const Eigen::MatrixXd Wi = W.inverse();
  const Eigen::VectorXd expected = (A.transpose() * Wi * A).ldlt().solve(A.transpose() * Wi * z);
  CHECK(max_abs((r.x - expected).eval()) < 1e-12);
  CHECK(max_abs((r.gain_inverse - (A.transpose() * Wi * A).inverse()).eval()) < 1e-10);
  CHECK(r.objective == doctest::Approx((z - A * r.x).dot(Wi * (z - A * r.x))));
}

TEST_CASE("nonlinear curve fit from exact data") {
  // y = a·exp(b·t) sampled without noise.
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(12, 0.0, 1.0);
  const double a = 2.0, b = -1.3;
  const Eigen::VectorXd z = (b * t).array().exp() * a;
  const NonlinearModel model{
      [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return (x(1) * t).array().exp() * x(0); },
      [&](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd J(t.size(), 2);
        J.col(0) = (x(1) * t).array().exp();
        J.col(1) = (x(1) * t).array().exp() * t.array() * x(0);
        return J;
      }};
  const GaussNewtonResult r =
      gauss_newton(model, z, Eigen::MatrixXd::Identity(12, 12), Eigen::Vector2d(1.0, 0.0));
  CHECK(r.converged);
  CHECK(std::abs(r.x(0) - a) < 1e-9);
  CHECK(std::abs(r.x(1) - b) < 1e-9);

  const GaussNewtonResult capped = gauss_newton(model, z, Eigen::MatrixXd::Identity(12, 12),
                                                Eigen::Vector2d(1.0, 0.0), {1e-12, 1});
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 1);
}

TEST_CASE("option and input validation") {
  const NonlinearModel model{[](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; },
                             [](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
                               return Eigen::MatrixXd::Identity(x.size(), x.size());
                             }};
  const Eigen::VectorXd z = Eigen::VectorXd::Ones(2);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(gauss_newton(model, z, I, z, {0.0, 5}), DomainError);
  CHECK_THROWS_AS(gauss_newton(model, z, I, z, {1e-6, 0}), DomainError);
  CHECK_THROWS_AS(gauss_newton(model, z, -I, z), DomainError);
  const NonlinearModel flat{[](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                              return Eigen::VectorXd::Constant(2, x.sum());
                            },
                            [](const Eigen::VectorXd&) -> Eigen::MatrixXd {
                              return Eigen::MatrixXd::Ones(2, 2);
                            }};
  CHECK_THROWS_AS(gauss_newton(flat, z, I, Eigen::VectorXd::Zero(2)), UnobservableError);
}

TEST_CASE("per-area estimation on the 30-bus case") {
  const Scenario s = ieee30_scenario();

  SUBCASE("zero noise recovers the load flow and the covariance is the inverse gain") {
    const TrialInput clean = draw_trial(s, 1, 0.0);
    const auto owned = split_measurements(s.net, s.part, clean.scada, clean.pmu);
    for (std::size_t a = 0; a < 3; ++a) {
      const AreaBuses& area = s.part.areas[a];
      const EstimationResult r =
          estimate_state(s.net, owned[a].scada, area.layout(), area.reference);
      REQUIRE(r.converged);
      const BusErrors e = compute_errors(r.estimate, s.truth);
      CHECK(std::max(e.dv.maxCoeff(), e.dtheta.maxCoeff()) < 1e-6);
      CHECK(r.objective < 1e-12);

      // Inverse gain assembled here over the unknown columns only.
      const MeasurementFunctions f(s.net, owned[a].scada, area.layout());
      const Eigen::MatrixXd H = f.jacobian(r.estimate);
      const Eigen::Index n = r.estimate.size();
      const Eigen::Index pinned = n + r.estimate.index_of(area.reference);
      std::vector<Eigen::Index> cols;
      for (Eigen::Index c = 0; c < 2 * n; ++c)
        if (c != pinned) cols.push_back(c);
      Eigen::MatrixXd Hr(H.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) Hr.col(static_cast<Eigen::Index>(k)) = H.col(cols[k]);
      const Eigen::VectorXd w = owned[a].scada.variances().cwiseInverse();
      const Eigen::MatrixXd gain = Hr.transpose() * w.asDiagonal() * Hr;
      const Eigen::MatrixXd expected = gain.fullPivLu().inverse();
      double worst = 0.0;
      for (std::size_t i = 0; i < cols.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
          worst = std::max(worst, std::abs(r.covariance(cols[i], cols[j]) -
                                           expected(static_cast<Eigen::Index>(i),
                                                    static_cast<Eigen::Index>(j))));
      CHECK(worst < 1e-10);
      CHECK(r.covariance.row(pinned).cwiseAbs().maxCoeff() == 0.0);
      CHECK(max_abs((r.covariance - r.covariance.transpose()).eval()) < 1e-14);
    }
  }

  SUBCASE("with noise: convergence and the first-order condition") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const TrialInput trial = draw_trial(s, seed);
      const auto owned = split_measurements(s.net, s.part, trial.scada, trial.pmu);
      for (std::size_t a = 0; a < 3; ++a) {
        const AreaBuses& area = s.part.areas[a];
        const EstimationResult r =
            estimate_state(s.net, owned[a].scada, area.layout(), area.reference);
        REQUIRE(r.converged);
        if (a == 1) CHECK(r.iterations <= 10);
        const MeasurementFunctions f(s.net, owned[a].scada, area.layout());
        const Eigen::MatrixXd H = f.jacobian(r.estimate);
        const Eigen::VectorXd g =
            H.transpose() * owned[a].scada.variances().cwiseInverse().asDiagonal() * r.residuals;
        const Eigen::Index pinned = r.estimate.size() + r.estimate.index_of(area.reference);
        Eigen::VectorXd free_g = g;
        free_g(pinned) = 0.0;
        // The Gauss-Newton step still implied by the gradient is below ε.
        CHECK((r.covariance * free_g).cwiseAbs().maxCoeff() < 1e-6);
        const double lowest =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r.covariance).eigenvalues().minCoeff();
        CHECK(lowest > -1e-14);
      }
    }
  }

  SUBCASE("too few measurements are unobservable") {
    const TrialInput trial = draw_trial(s, 1);
    const auto owned = split_measurements(s.net, s.part, trial.scada, trial.pmu);
    const AreaBuses& area = s.part.areas[0];
    MeasurementSet few = owned[0].scada;
    few.items.resize(6);
    CHECK_THROWS_AS(estimate_state(s.net, few, area.layout(), area.reference), UnobservableError);
  }
}
