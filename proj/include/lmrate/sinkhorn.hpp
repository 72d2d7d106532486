#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmrate/problem.hpp"
#include "lmrate/types.hpp"

namespace lmrate {

enum class LambdaStrategy { GradientProjection, RootFind };
enum class SolveStatus { Converged, MaxIters, NumericalFailure };

std::string_view to_string(LambdaStrategy s);
std::string_view to_string(SolveStatus s);

struct SolverConfig {
  int max_iters = 500;
  double tol = 1e-10;
  // Unset means RootFind on centrally symmetric instances and
  // GradientProjection otherwise.
  std::optional<LambdaStrategy> lambda_strategy;
  // Unset means default_step_size(p).
  std::optional<double> tau;
  double lambda_init = 1.0;
  // Switch to log-sum-exp updates when plain scalings leave the double
  // range. Without it such a step raises NumericalError.
  bool log_domain = true;
  // Run every step in the log domain.
  bool force_log_domain = false;
  // When max_iters passes without convergence, continue with damped Newton
  // steps on the dual (the psi block is eliminated, so any N works).
  bool refine = false;
  int refine_max_steps = 100;
};

/// Throws std::invalid_argument with the offending field name.
void validate_config(const SolverConfig& cfg);

LambdaStrategy resolve_strategy(const SolverConfig& cfg, const DiscreteProblem& p);

/// 1 / M_D^2.
double default_step_size(const DiscreteProblem& p);

/// 1 / sum_ij P_X(i) P_Y(j) d_ij^2, the inverse curvature of the dual in
/// lambda at the product coupling. Much larger than default_step_size on
/// wide output grids and still a descent step there.
double curvature_step_size(const DiscreteProblem& p);

struct Residuals {
  double r_phi = 0.0;
  double r_psi = 0.0;
  double r_lambda = 0.0;

  double max() const;
};

struct SinkhornState {
  Coupling q;
  int iter = 0;
  Residuals res;

  Vector phi() const { return q.phi(); }
  Vector psi() const { return q.psi(); }
  double lam() const { return q.lam; }
};

/// phi = 1, psi = 1, lambda = lambda_init.
SinkhornState initial_state(const DiscreteProblem& p, double lambda_init = 1.0);

/// Row scaling, then column scaling with the new row factors, at the current
/// lambda.
SinkhornState sinkhorn_step(const SinkhornState& s, const DiscreteProblem& p,
                            const SolverConfig& cfg = {});

/// F(lam; phi, psi) = sum_ij phi_i psi_j d_ij exp(-lam d_ij) - T.
double multiplier_function(const SinkhornState& s, const DiscreteProblem& p, double lam);

/// lam <- max(0, lam + tau F(lam)).
SinkhornState update_lambda_projection(const SinkhornState& s, const DiscreteProblem& p,
                                       double tau);

/// lam <- root of F on [0, inf) if F(0) > 0, else 0. Bracketing with
/// Newton steps on log(F + T) - log(T), which is convex and decreasing.
/// Throws NumericalError when the bracket passes 1e6.
SinkhornState update_lambda_rootfind(const SinkhornState& s, const DiscreteProblem& p);

/// Marginal and multiplier residuals at the state's own lambda. r_lambda is
/// zero when lambda = 0 and F(0) <= 0.
Residuals residuals(const SinkhornState& s, const DiscreteProblem& p);

struct TraceRow {
  int iter = 0;
  double r_phi = 0.0;
  double r_psi = 0.0;
  double r_lambda = 0.0;
  double dual_objective = 0.0;
  double lm_rate_nats = 0.0;
  double lambda = 0.0;
  double f_at_zero = 0.0;
  double alpha_spread = 0.0;
  double beta_spread = 0.0;
};

struct SolveReport {
  Coupling solution;
  double lm_rate_nats = 0.0;
  double lambda_final = 0.0;
  int iterations = 0;
  std::vector<TraceRow> trace;  // one row per completed iteration
  TraceRow initial;             // the starting point, iteration 0
  SolveStatus status = SolveStatus::MaxIters;
  LambdaStrategy strategy = LambdaStrategy::RootFind;
  double tau = 0.0;
  int failure_iter = -1;
  // Index into trace of the first Newton refinement row, -1 if none ran.
  int refine_start = -1;
  std::string message;
  double runtime_ms = 0.0;

  Residuals final_residuals() const;
};

/// Damped Newton on the dual from the given state until the largest
/// residual is at most tol. Rows are appended to trace. Returns false when
/// the line search stalls or max_steps is used up.
bool refine_newton(SinkhornState& s, const DiscreteProblem& p, double tol, int max_steps,
                   std::vector<TraceRow>& trace);

/// Runs the scaling and multiplier updates until the largest residual is
/// at most tol or max_iters is reached. Numerical failures are reported in
/// the status, never thrown. Throws std::invalid_argument on a bad config.
SolveReport solve(const DiscreteProblem& p, const SolverConfig& cfg = {});

}  // namespace lmrate
