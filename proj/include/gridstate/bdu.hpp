#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace gridstate {

/// [δH δz] = S Δ [E_h E_z] with ‖Δ‖₂ ≤ 1. S is m×q, E_h is k×n, E_z has k
/// entries, so Δ is q×k.
struct UncertaintyStructure {
  Eigen::MatrixXd S;
  Eigen::MatrixXd Eh;
  Eigen::VectorXd Ez;
};

/// min_x max_{‖y‖ ≤ ‖E_h x − E_z‖} (Hx − z + Sy)ᵀ R (Hx − z + Sy)
struct RobustProblem {
  Eigen::VectorXd z;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;  ///< weighting matrix, W⁻¹
  UncertaintyStructure uncertainty;
};

struct LambdaStrategy {
  enum class Kind { Exact, Approx };
  Kind kind = Kind::Approx;
  double mu = 1.0;

  static LambdaStrategy exact() { return {Kind::Exact, 0.0}; }
  static LambdaStrategy approx(double mu) { return {Kind::Approx, mu}; }
};

struct RobustSolution {
  Eigen::VectorXd x;
  /// +∞ when the perturbation bound vanishes identically (E_h = 0, E_z = 0):
  /// the weighting then reduces to R.
  double lambda = 0.0;
  Eigen::MatrixXd R_hat;
  double worst_case = 0.0;
};

/// ‖SᵀRS‖₂, the left end of the admissible λ interval.
double lambda_lower_bound(const Eigen::MatrixXd& S, const Eigen::MatrixXd& R);

/// (λI − M)† for symmetric M, through its eigendecomposition. Eigenvalues of
/// λI − M below 1e-12·max(λ, 1) in magnitude are treated as zero.
Eigen::MatrixXd shifted_pseudo_inverse(const Eigen::MatrixXd& M, double lambda);

/// R(λ) = R + RS(λI − SᵀRS)†SᵀR
Eigen::MatrixXd modified_weight(const RobustProblem& p, double lambda);

/// x(λ) = (HᵀR(λ)H + λE_hᵀE_h)⁻¹ (HᵀR(λ)z + λE_hᵀE_z). Throws RankError when
/// the normal matrix is singular.
Eigen::VectorXd x_of_lambda(const RobustProblem& p, double lambda);

/// G(λ) = ‖Hx(λ) − z‖²_{R(λ)} + λ‖E_h x(λ) − E_z‖². Throws DomainError for
/// λ < ‖SᵀRS‖.
double g_of_lambda(double lambda, const RobustProblem& p);

/// argmin of G over [‖SᵀRS‖, ∞): geometric bracketing from the left end,
/// then golden section to 1e-8·(1 + λ̂). Returns 0 when S = 0 and +∞ when
/// E_h = 0 and E_z = 0 (G then decreases towards the WLS cost). When G is
/// still decreasing at λ − ‖SᵀRS‖ = 1e12·max(‖SᵀRS‖, 1) that end is returned.
double min_g(const RobustProblem& p);

/// (1 + μ)‖SᵀRS‖₂; DomainError for μ < 0.
double lambda_approx(double mu, const Eigen::MatrixXd& S, const Eigen::MatrixXd& R);

RobustSolution bdu_solve(const RobustProblem& p, LambdaStrategy strategy);

/// Largest (Hx − z + Sy)ᵀR(Hx − z + Sy) found over ‖y‖ ≤ ‖E_h x − E_z‖.
/// Candidates are `samples` random boundary points plus the analytic
/// directions (gradient at y = 0, the dominant eigenvectors of SᵀRS and the
/// dual optimum); each is refined by projected ascent on the sphere.
double worst_case_objective(const Eigen::VectorXd& x, const RobustProblem& p,
                            int samples, std::uint64_t seed);

/// Weighted least squares (HᵀRH)⁻¹HᵀRz; RankError when singular.
Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& H,
                                       const Eigen::MatrixXd& R,
                                       const Eigen::VectorXd& z);

/// A q×k matrix with unit spectral norm: a standard Gaussian draw divided by
/// its largest singular value.
Eigen::MatrixXd sample_unit_perturbation(Eigen::Index q, Eigen::Index k,
                                         std::mt19937_64& rng);

}  // namespace gridstate
