#include "lmrate/gmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lmrate {

namespace {

// Log normaliser per output and the posterior mean of d under
// P_X(k) exp(-s d_kj).
void output_terms(const DiscreteProblem& p, double s, Vector& lognorm, Vector* mean_d) {
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  Vector top = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) top[j] = std::max(top[j], p.log_p_x[i] - s * p.d(i, j));
  Vector acc = Vector::Zero(n);
  Vector acc_d = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double e = std::exp(p.log_p_x[i] - s * p.d(i, j) - top[j]);
      acc[j] += e;
      acc_d[j] += e * p.d(i, j);
    }
  }
  lognorm = top.array() + acc.array().log();
  if (mean_d) *mean_d = acc_d.cwiseQuotient(acc);
}

}  // namespace

double gmi_objective(const DiscreteProblem& p, double s) {
  Vector lognorm;
  output_terms(p, s, lognorm, nullptr);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.d.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < p.d.cols(); ++j) {
      const double w = p.w(i, j);
      if (w > 0.0) row += w * (-s * p.d(i, j) - lognorm[j]);
    }
    total += p.p_x[i] * row;
  }
  return total;
}

double gmi_slope(const DiscreteProblem& p, double s) {
  Vector lognorm, mean_d;
  output_terms(p, s, lognorm, &mean_d);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.d.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < p.d.cols(); ++j) row += p.w(i, j) * (mean_d[j] - p.d(i, j));
    total += p.p_x[i] * row;
  }
  return total;
}

GmiResult gmi(const DiscreteProblem& p, const GmiOptions& opts) {
  if (!(opts.s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
  GmiResult res;
  double hi = opts.s_max;
  int growth = 0;
  while (gmi_slope(p, hi) > 0.0) {
    ++res.evaluations;
    if (growth++ >= opts.max_growth)
      throw std::runtime_error("GMI maximiser is unbounded: slope still positive at s = " +
                               std::to_string(hi));
    hi *= 2.0;
  }
  ++res.evaluations;

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = gmi_objective(p, c);
  double fd = gmi_objective(p, d);
  res.evaluations += 2;
  while (b - a > opts.interval_tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = gmi_objective(p, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = gmi_objective(p, d);
    }
    ++res.evaluations;
  }
  res.s_star = 0.5 * (a + b);
  res.value_nats = gmi_objective(p, res.s_star);
  ++res.evaluations;

  // Comparisons of nearly equal values near a flat top only place s to
  // about sqrt(eps); the sign of the slope is sharper.
  const double pad = 1e-6 * (1.0 + res.s_star);
  double lo = std::max(0.0, a - pad), up = b + pad;
  res.evaluations += 2;
  if (gmi_slope(p, lo) > 0.0 && gmi_slope(p, up) < 0.0) {
    for (int k = 0; k < 200 && up - lo > 1e-14 * (1.0 + up); ++k) {
      const double mid = 0.5 * (lo + up);
      (gmi_slope(p, mid) > 0.0 ? lo : up) = mid;
      ++res.evaluations;
    }
    const double s = 0.5 * (lo + up);
    const double v = gmi_objective(p, s);
    ++res.evaluations;
    if (v >= res.value_nats) {
      res.s_star = s;
      res.value_nats = v;
    }
  }
  // s = 0 always gives 0.
  if (res.value_nats < 0.0 && res.s_star <= opts.interval_tol) {
    res.s_star = 0.0;
    res.value_nats = 0.0;
  }
  return res;
}

}  // namespace lmrate
