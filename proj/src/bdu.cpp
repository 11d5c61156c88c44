#include "gridstate/bdu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gridstate/errors.hpp"
#include "gridstate/scalar_search.hpp"

namespace gridstate {
namespace {

constexpr double kPinvTolerance = 1e-12;
constexpr double kMinReciprocalCondition = 1e-14;

void validate(const RobustProblem& p) {
  const Eigen::Index m = p.z.size();
  const UncertaintyStructure& u = p.uncertainty;
  if (p.H.rows() != m || p.R.rows() != m || p.R.cols() != m)
    throw DomainError(fmt::format(
        "robust problem dimensions disagree: z has {}, H is {}x{}, R is {}x{}",
        m, p.H.rows(), p.H.cols(), p.R.rows(), p.R.cols()));
  if (u.S.rows() != m)
    throw DomainError(fmt::format("S has {} rows, expected {}", u.S.rows(), m));
  if (u.Eh.cols() != p.H.cols() || u.Eh.rows() != u.Ez.size())
    throw DomainError(fmt::format(
        "E_h is {}x{} and E_z has {} entries; expected {} columns and matching rows",
        u.Eh.rows(), u.Eh.cols(), u.Ez.size(), p.H.cols()));
}

bool no_uncertainty(const RobustProblem& p) {
  return p.uncertainty.S.size() == 0 || p.uncertainty.S.isZero(0.0);
}

bool no_bound(const RobustProblem& p) {
  return (p.uncertainty.Eh.size() == 0 || p.uncertainty.Eh.isZero(0.0)) &&
         (p.uncertainty.Ez.size() == 0 || p.uncertainty.Ez.isZero(0.0));
}

Eigen::VectorXd solve_normal(const Eigen::MatrixXd& normal,
                             const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kMinReciprocalCondition))
    throw RankError(fmt::format("normal matrix ({}x{}) is singular",
                                normal.rows(), normal.cols()));
  return llt.solve(rhs);
}

// Everything about the λ-family that does not depend on λ, so that one G(λ)
// costs an n×n solve. With M = SᵀRS = QΛQᵀ and P = RSQ:
//   R(λ) = R + P D(λ) Pᵀ,  D(λ) = diag((λ − Λ)†).
struct Family {
  const RobustProblem& p;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd P;
  Eigen::MatrixXd HtRH, HtP, EhtEh;
  Eigen::VectorXd HtRz, Ptz, EhtEz;
  double lower = 0.0;

  explicit Family(const RobustProblem& problem) : p(problem) {
    validate(p);
    const Eigen::MatrixXd& S = p.uncertainty.S;
    const Eigen::MatrixXd RS = p.R * S;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S.transpose() * RS);
    eigenvalues = eig.eigenvalues();
    P = RS * eig.eigenvectors();
    lower = eigenvalues.size() ? std::max(0.0, eigenvalues.maxCoeff()) : 0.0;
    HtRH = p.H.transpose() * p.R * p.H;
    HtRz = p.H.transpose() * p.R * p.z;
    HtP = p.H.transpose() * P;
    Ptz = P.transpose() * p.z;
    EhtEh = p.uncertainty.Eh.transpose() * p.uncertainty.Eh;
    EhtEz = p.uncertainty.Eh.transpose() * p.uncertainty.Ez;
  }

  Eigen::VectorXd d(double lambda) const {
    Eigen::VectorXd out(eigenvalues.size());
    const double tol = kPinvTolerance * std::max(std::abs(lambda), 1.0);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double gap = lambda - eigenvalues(i);
      out(i) = std::abs(gap) > tol ? 1.0 / gap : 0.0;
    }
    return out;
  }

  void guard(double lambda) const {
    if (lambda < lower - kPinvTolerance * std::max(lower, 1.0))
      throw DomainError(fmt::format(
          "lambda = {:.17g} is below the admissible bound {:.17g}", lambda, lower));
  }

  Eigen::VectorXd x(double lambda) const {
    const Eigen::VectorXd dl = d(lambda);
    const Eigen::MatrixXd normal =
        HtRH + HtP * dl.asDiagonal() * HtP.transpose() + lambda * EhtEh;
    const Eigen::VectorXd rhs =
        HtRz + HtP * dl.asDiagonal() * Ptz + lambda * EhtEz;
    return solve_normal(normal, rhs);
  }

  double g(double lambda) const {
    guard(lambda);
    const Eigen::VectorXd xl = x(lambda);
    const Eigen::VectorXd r = p.H * xl - p.z;
    const Eigen::VectorXd pr = P.transpose() * r;
    const double weighted = r.dot(p.R * r) + pr.dot(d(lambda).asDiagonal() * pr);
    const Eigen::VectorXd bound = p.uncertainty.Eh * xl - p.uncertainty.Ez;
    return weighted + lambda * bound.squaredNorm();
  }
};

}  // namespace

double lambda_lower_bound(const Eigen::MatrixXd& S, const Eigen::MatrixXd& R) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S.transpose() * R * S,
                                                     Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

Eigen::MatrixXd shifted_pseudo_inverse(const Eigen::MatrixXd& M, double lambda) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  Eigen::VectorXd d(M.rows());
  const double tol = kPinvTolerance * std::max(std::abs(lambda), 1.0);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double gap = lambda - eig.eigenvalues()(i);
    d(i) = std::abs(gap) > tol ? 1.0 / gap : 0.0;
  }
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd modified_weight(const RobustProblem& p, double lambda) {
  validate(p);
  if (std::isinf(lambda)) return p.R;
  const Eigen::MatrixXd& S = p.uncertainty.S;
  const Eigen::MatrixXd RS = p.R * S;
  return p.R + RS * shifted_pseudo_inverse(S.transpose() * RS, lambda) *
                   RS.transpose();
}

Eigen::VectorXd x_of_lambda(const RobustProblem& p, double lambda) {
  const Family family(p);
  family.guard(lambda);
  return family.x(lambda);
}

double g_of_lambda(double lambda, const RobustProblem& p) {
  return Family(p).g(lambda);
}

double lambda_approx(double mu, const Eigen::MatrixXd& S, const Eigen::MatrixXd& R) {
  if (!(mu >= 0.0)) throw DomainError("mu must be non-negative");
  return (1.0 + mu) * lambda_lower_bound(S, R);
}

double min_g(const RobustProblem& p) {
  validate(p);
  if (no_uncertainty(p)) return 0.0;
  if (no_bound(p)) return std::numeric_limits<double>::infinity();
  const Family family(p);
  const double lower = family.lower;
  const double scale = std::max(lower, 1.0);
  // G at λ = ‖SᵀRS‖ computed through the pseudoinverse is not the limit from
  // the right, so the search lives on t = λ − ‖SᵀRS‖ > 0.
  // Close to the bound the normal matrix can be numerically singular; such
  // points count as +∞ and the search starts at the first solvable one.
  double last_finite = 0.0;
  const auto f = [&](double t) {
    try {
      const double v = family.g(lower + t);
      if (std::isfinite(v)) last_finite = std::max(last_finite, t);
      return v;
    } catch (const RankError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double t_max = 1e12 * scale;
  double t0 = 1e-10 * scale;
  double unsolvable = 0.0;
  while (!std::isfinite(f(t0))) {
    unsolvable = t0;
    t0 *= 4.0;
    if (t0 > t_max)
      throw OptimizationError("G(lambda) is not finite anywhere on the search range");
  }
  Bracket b;
  try {
    b = bracket_from_origin(f, t0, 4.0, t_max);
  } catch (const OptimizationError&) {
    // G still decreasing: the minimum is the λ → ∞ limit, where x(λ) tends
    // to the least-squares fit constrained to E_h x = E_z.
    if (!(last_finite > 0.0)) throw;
    spdlog::debug("min_g: G decreasing up to lambda {:.6g}", lower + last_finite);
    return lower + last_finite;
  }
  if (b.lo < unsolvable) b.lo = unsolvable;
  const ScalarMinimum best =
      golden_section(f, b.lo, b.hi, 1e-8 * (1.0 + lower), 1e-8);
  if (!std::isfinite(best.value))
    throw OptimizationError("golden-section search ended on an unsolvable lambda");
  spdlog::debug("min_g: lambda {:.10g} (lower bound {:.10g}, {} evaluations)",
                lower + best.t, lower, best.evaluations);
  return lower + best.t;
}

Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& H,
                                       const Eigen::MatrixXd& R,
                                       const Eigen::VectorXd& z) {
  return solve_normal(H.transpose() * R * H, H.transpose() * R * z);
}

RobustSolution bdu_solve(const RobustProblem& p, LambdaStrategy strategy) {
  validate(p);
  RobustSolution out;
  if (no_bound(p) && !no_uncertainty(p)) {
    out.lambda = std::numeric_limits<double>::infinity();
    out.R_hat = p.R;
    out.x = weighted_least_squares(p.H, p.R, p.z);
  } else {
    const Family family(p);
    out.lambda = strategy.kind == LambdaStrategy::Kind::Exact
                     ? min_g(p)
                     : lambda_approx(strategy.mu, p.uncertainty.S, p.R);
    out.x = family.x(out.lambda);
    out.R_hat = modified_weight(p, out.lambda);
  }
  out.worst_case = worst_case_objective(out.x, p, 16, 0);
  return out;
}

double worst_case_objective(const Eigen::VectorXd& x, const RobustProblem& p,
                            int samples, std::uint64_t seed) {
  validate(p);
  if (samples < 0) throw DomainError("sample count must be non-negative");
  const Eigen::VectorXd r = p.H * x - p.z;
  const double nominal = r.dot(p.R * r);
  const Eigen::MatrixXd& S = p.uncertainty.S;
  const double phi =
      p.uncertainty.Ez.size() ? (p.uncertainty.Eh * x - p.uncertainty.Ez).norm() : 0.0;
  if (!(phi > 0.0) || S.cols() == 0) return nominal;

  const Eigen::MatrixXd M = S.transpose() * p.R * S;
  const Eigen::VectorXd g = S.transpose() * p.R * r;
  const auto value = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd e = r + S * y;
    return e.dot(p.R * e);
  };
  // Maximizing a convex quadratic on the sphere: y ← φ·∇/‖∇‖ never decreases
  // the objective.
  const auto refine = [&](Eigen::VectorXd y) {
    double best = value(y);
    for (int it = 0; it < 500; ++it) {
      const Eigen::VectorXd grad = M * y + g;
      const double norm = grad.norm();
      if (!(norm > 0.0)) break;
      const Eigen::VectorXd next = phi * grad / norm;
      const double v = value(next);
      const double moved = (next - y).norm();
      y = next;
      if (v <= best * (1.0 + 1e-15) && moved < 1e-13 * phi) {
        best = std::max(best, v);
        break;
      }
      best = std::max(best, v);
    }
    return best;
  };

  std::vector<Eigen::VectorXd> starts;
  if (g.norm() > 0.0) starts.push_back(phi * g.normalized());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::Index q = M.rows();
  const Eigen::VectorXd top = eig.eigenvectors().col(q - 1);
  starts.push_back(phi * top);
  starts.push_back(-phi * top);
  // Dual optimum: the inner maximum equals min_{λ ≥ ‖M‖} rᵀR(λ)r + λφ², with
  // maximizer along (λI − M)†g.
  {
    const double lower = std::max(0.0, eig.eigenvalues()(q - 1));
    const Eigen::VectorXd c = eig.eigenvectors().transpose() * g;
    const auto dual = [&](double t) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < q; ++i) {
        const double gap = lower + t - eig.eigenvalues()(i);
        if (gap > 0.0) acc += c(i) * c(i) / gap;
      }
      return nominal + acc + (lower + t) * phi * phi;
    };
    try {
      const double scale = std::max(lower, 1.0);
      const Bracket b = bracket_from_origin(dual, 1e-12 * scale, 4.0, 1e16 * scale);
      const ScalarMinimum m = golden_section(dual, b.lo, b.hi, 1e-14 * scale, 1e-12);
      Eigen::VectorXd coeff(q);
      for (Eigen::Index i = 0; i < q; ++i) {
        const double gap = lower + m.t - eig.eigenvalues()(i);
        coeff(i) = gap > 0.0 ? c(i) / gap : 0.0;
      }
      const Eigen::VectorXd y = eig.eigenvectors() * coeff;
      if (y.norm() > 0.0) starts.push_back(phi * y.normalized());
    } catch (const OptimizationError&) {
      // No interior dual minimum; the eigenvector starts cover this case.
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd d(q);
    for (Eigen::Index i = 0; i < q; ++i) d(i) = normal(rng);
    if (d.norm() > 0.0) starts.push_back(phi * d.normalized());
  }

  double best = nominal;
  for (const Eigen::VectorXd& y : starts) best = std::max(best, refine(y));
  return best;
}

Eigen::MatrixXd sample_unit_perturbation(Eigen::Index q, Eigen::Index k,
                                         std::mt19937_64& rng) {
  Eigen::MatrixXd delta(q, k);
  if (delta.size() == 0) return delta;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < q; ++i) delta(i, j) = normal(rng);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
  return delta / svd.singularValues()(0);
}

}  // namespace gridstate
