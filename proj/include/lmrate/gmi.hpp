#pragma once

#include "lmrate/problem.hpp"

namespace lmrate {

struct GmiResult {
  double value_nats = 0.0;
  double s_star = 0.0;
  int evaluations = 0;
};

struct GmiOptions {
  double s_max = 50.0;
  // How many times the upper end may double while the maximiser sits on it.
  int max_growth = 20;
  double interval_tol = 1e-10;
};

/// sum_ij P_X(i) W(j|i) log[exp(-s d_ij) / sum_k P_X(k) exp(-s d_kj)].
double gmi_objective(const DiscreteProblem& p, double s);

/// d/ds of gmi_objective.
double gmi_slope(const DiscreteProblem& p, double s);

/// Golden-section maximisation of the concave gmi_objective over [0, s_max].
/// Throws std::runtime_error when the maximiser stays on the upper end after
/// the allowed growth.
GmiResult gmi(const DiscreteProblem& p, const GmiOptions& opts = {});

}  // namespace lmrate
