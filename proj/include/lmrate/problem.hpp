#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmrate/types.hpp"

namespace lmrate {

/// A discrete constrained transport instance: minimise sum Q log Q over
/// couplings with marginals (p_x, p_y) subject to <d, Q> <= t.
struct DiscreteProblem {
  Matrix d;    // M x N decoding metric
  Vector p_x;  // length M
  Vector p_y;  // length N
  Matrix w;    // M x N channel kernel, row-stochastic
  double t = 0.0;

  // Index of the negated input / output point; empty when the alphabets are
  // not known to be centrally symmetric.
  std::vector<std::size_t> x_neg;
  std::vector<std::size_t> y_neg;

  // Whether t was supplied by the caller instead of being derived from
  // (p_x, w, d).
  bool threshold_overridden = false;

  // Cached derived quantities, filled by make_problem.
  Vector log_p_x;
  Vector log_p_y;
  double max_d = 0.0;
  double entropy_x = 0.0;
  double entropy_y = 0.0;

  std::size_t m() const { return static_cast<std::size_t>(d.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(d.cols()); }
};

/// Output marginal sum_i p_x(i) w(i, .). When x_neg is given and p_x is
/// symmetric under it, the result is exactly symmetric as well.
Vector output_marginal(const Vector& p_x, const Matrix& w, const std::vector<std::size_t>& x_neg = {});

/// Expected metric under the joint law p_x(i) w(i, j).
double expected_metric(const Matrix& d, const Vector& p_x, const Matrix& w);

/// Assembles a problem from a metric, an input law and a channel kernel.
/// p_y is the output marginal of (p_x, w); t defaults to expected_metric so
/// that the true joint law is itself feasible. Throws std::invalid_argument
/// on shape mismatches.
DiscreteProblem make_problem(Matrix d, Vector p_x, Matrix w,
                             std::optional<double> threshold = std::nullopt,
                             std::vector<std::size_t> x_neg = {},
                             std::vector<std::size_t> y_neg = {});

/// Returns a copy with t replaced.
DiscreteProblem with_threshold(DiscreteProblem p, double t);

/// Human-readable list of violated invariants; empty when the instance is
/// valid.
std::vector<std::string> validate_problem(const DiscreteProblem& p, double tol = 1e-12);

/// Shannon entropy in nats; zero entries contribute nothing.
double shannon_entropy(const Vector& probs);

/// Coupling in scaling form Q_ij = phi_i exp(-lam d_ij) psi_j, stored through
/// the logarithms of the scaling vectors so that extreme scalings stay
/// representable.
struct Coupling {
  Vector log_phi;
  Vector log_psi;
  double lam = 0.0;

  Vector phi() const { return log_phi.array().exp().matrix(); }
  Vector psi() const { return log_psi.array().exp().matrix(); }

  static Coupling from_scalings(const Vector& phi, const Vector& psi, double lam);
};

/// The product coupling p_x p_y^T (lam = 0).
Coupling product_coupling(const DiscreteProblem& p);

/// Single-pass reductions over Q used by the solvers and diagnostics.
struct CouplingSums {
  Vector row;              // Q 1
  Vector col;              // Q^T 1
  double mass = 0.0;       // 1^T Q 1
  double metric = 0.0;     // <D, Q>
  double entropy = 0.0;    // sum Q log Q
};

/// Streams over rows without materialising Q. Throws NumericalError when a
/// factor or an entry is not finite.
CouplingSums coupling_sums(const Coupling& q, const DiscreteProblem& p);

/// Dense Q; refuses instances with more than max_entries entries.
Matrix materialize(const Coupling& q, const DiscreteProblem& p,
                   std::size_t max_entries = 10'000'000);

/// sum Q log Q with 0 log 0 = 0.
double primal_entropy(const Coupling& q, const DiscreteProblem& p);
double primal_entropy(const Matrix& q);

/// primal_entropy + H(P_X) + H(P_Y), in nats.
double lm_rate(const Coupling& q, const DiscreteProblem& p);
double lm_rate(const Matrix& q, const DiscreteProblem& p);

/// t - <D, Q>; non-negative means the metric constraint holds.
double constraint_gap(const Coupling& q, const DiscreteProblem& p);
double constraint_gap(const Matrix& q, const DiscreteProblem& p);

/// The true joint law p_x(i) w(i, j) as a dense matrix.
Matrix joint_law(const DiscreteProblem& p);

}  // namespace lmrate
