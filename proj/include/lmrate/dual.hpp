#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmrate/problem.hpp"
#include "lmrate/sinkhorn.hpp"
#include "lmrate/types.hpp"

namespace lmrate {

/// Dual coordinates; phi = exp(-alpha - 1/2) and psi = exp(-beta - 1/2).
struct DualPoint {
  Vector alpha;
  Vector beta;
  double lam = 0.0;
};

DualPoint to_dual(const Coupling& q);
Coupling to_coupling(const DualPoint& dp);

/// g = 1^T Q 1 + <alpha, P_X> + <beta, P_Y> + lam T. Throws NumericalError
/// when the mass overflows.
double dual_objective(const DualPoint& dp, const DiscreteProblem& p);
double dual_objective(const Coupling& q, const DiscreteProblem& p);
/// Same value from reductions the caller already has.
double dual_objective(const Coupling& q, const DiscreteProblem& p, const CouplingSums& sums);

struct DualGradient {
  Vector alpha;  // P_X - Q 1
  Vector beta;   // P_Y - Q^T 1
  double lam = 0.0;  // T - <D, Q>

  Vector stacked() const;
  double inf_norm() const;
};

DualGradient dual_gradient(const DualPoint& dp, const DiscreteProblem& p);

inline constexpr std::size_t kDefaultHessianCap = 1024;

/// Dense (M+N+1) x (M+N+1) Hessian. Throws std::length_error when M+N+1
/// exceeds cap.
Matrix dual_hessian(const DualPoint& dp, const DiscreteProblem& p,
                    std::size_t cap = kDefaultHessianCap);

/// Shift along (1_M; -1_N; 0) so that sum(alpha) = sum(beta).
DualPoint gauge_normalize(DualPoint dp);

/// The gauge direction (1_M; -1_N; 0).
Vector gauge_direction(std::size_t m, std::size_t n);

struct OracleOptions {
  double tol = 1e-12;
  int max_iters = 500;
  std::size_t hessian_cap = kDefaultHessianCap;
  // Starting point; the product coupling with lam = 0 when unset.
  std::optional<DualPoint> start;
};

/// Damped Newton on g. Solves with lam frozen at 0 first and frees lam only
/// when the multiplier gradient is negative there. Steps are projected off
/// the gauge direction and backtracked until g decreases. Failure to
/// decrease is reported as NumericalFailure. Throws std::length_error when
/// the Hessian cap is exceeded.
SolveReport newton_oracle(const DiscreteProblem& p, const OracleOptions& opts = {});

struct ScarlettDualPoint {
  double zeta = 0.0;
  Vector a;
};

/// zeta = lam, a_i = log(phi_i / P_X(i)).
ScarlettDualPoint scarlett_from_coupling(const Coupling& q, const DiscreteProblem& p);

/// sum_ij P_X(i) W(j|i) log[exp(-zeta d_ij + a_i) / sum_k P_X(k) exp(-zeta d_kj + a_k)].
double scarlett_dual_value(const ScarlettDualPoint& sp, const DiscreteProblem& p);

struct KernelReport {
  int rank = 0;
  int nullity = 0;
  // Nullity 1 with the null vector parallel to the gauge direction.
  bool gauge_only = false;
  // Nullity above 1, e.g. a constant metric.
  bool degenerate = false;
  // |cos| between the first null vector and the gauge direction.
  double alignment = 0.0;
  Vector singular_values;
};

/// Null space of the MN x (M+N+1) matrix with rows (e_i; e_j; d_ij), via SVD
/// with singular values below rel_tol * largest treated as zero.
KernelReport kernel_structure(const Matrix& d, double rel_tol = 1e-10);

/// Rank from column-pivoted QR with threshold rel_tol * max |R_kk|.
int numerical_rank(const Matrix& a, double rel_tol = 1e-10);

struct ConvergenceCertificate {
  double m_d = 0.0;
  double delta = 0.0;
  double l_lambda = 0.0;
  double m_lambda = 0.0;
  double c_d = 0.0;
  double m0 = 0.0;
  double s0 = 0.0;
  double e0 = 0.0;
  double tau = 0.0;
  double g_star = 0.0;
  std::string g_star_source;
  double max_spread = 0.0;
  bool spreads_bounded = false;
  bool bound_satisfied = false;
  // min over iterations of lhs / rhs - 1; +inf when every error hit zero.
  double worst_margin = 0.0;
  int worst_iter = -1;
  std::vector<double> errors;  // e^0, e^1, ...
};

/// Constants and the sublinear-rate inequality for a recorded run. Throws
/// std::runtime_error when some g^l falls more than 1e-10 below g_star.
ConvergenceCertificate certificate(const SolveReport& rep, const DiscreteProblem& p,
                                   double g_star, std::string g_star_source = "newton");

}  // namespace lmrate
