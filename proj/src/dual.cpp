#include "lmrate/dual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace lmrate {

DualPoint to_dual(const Coupling& q) {
  return DualPoint{(-q.log_phi.array() - 0.5).matrix(), (-q.log_psi.array() - 0.5).matrix(), q.lam};
}

Coupling to_coupling(const DualPoint& dp) {
  return Coupling{(-dp.alpha.array() - 0.5).matrix(), (-dp.beta.array() - 0.5).matrix(), dp.lam};
}

double dual_objective(const Coupling& q, const DiscreteProblem& p, const CouplingSums& sums) {
  // <alpha, P_X> = -<log_phi, P_X> - sum(P_X) / 2, likewise for beta.
  return sums.mass - q.log_phi.dot(p.p_x) - 0.5 * p.p_x.sum() - q.log_psi.dot(p.p_y) -
         0.5 * p.p_y.sum() + q.lam * p.t;
}

double dual_objective(const Coupling& q, const DiscreteProblem& p) {
  return dual_objective(q, p, coupling_sums(q, p));
}

double dual_objective(const DualPoint& dp, const DiscreteProblem& p) {
  const CouplingSums sums = coupling_sums(to_coupling(dp), p);
  return sums.mass + dp.alpha.dot(p.p_x) + dp.beta.dot(p.p_y) + dp.lam * p.t;
}

Vector DualGradient::stacked() const {
  Vector v(alpha.size() + beta.size() + 1);
  v << alpha, beta, lam;
  return v;
}

double DualGradient::inf_norm() const {
  double r = std::abs(lam);
  if (alpha.size()) r = std::max(r, alpha.cwiseAbs().maxCoeff());
  if (beta.size()) r = std::max(r, beta.cwiseAbs().maxCoeff());
  return r;
}

namespace {

DualGradient gradient_from_sums(const CouplingSums& s, const DiscreteProblem& p) {
  return DualGradient{p.p_x - s.row, p.p_y - s.col, p.t - s.metric};
}

// Hessian over (alpha, beta) or (alpha, beta, lam) at a materialised Q.
Matrix assemble_hessian(const Matrix& q, const DiscreteProblem& p, bool with_lam) {
  const auto m = q.rows();
  const auto n = q.cols();
  const auto k = m + n + (with_lam ? 1 : 0);
  Matrix h = Matrix::Zero(k, k);
  const Matrix qd = q.cwiseProduct(p.d);
  for (Eigen::Index i = 0; i < m; ++i) h(i, i) = q.row(i).sum();
  for (Eigen::Index j = 0; j < n; ++j) h(m + j, m + j) = q.col(j).sum();
  h.block(0, m, m, n) = q;
  h.block(m, 0, n, m) = q.transpose();
  if (with_lam) {
    const Vector a = qd.rowwise().sum();
    const Vector b = qd.colwise().sum().transpose();
    h.block(0, m + n, m, 1) = a;
    h.block(m + n, 0, 1, m) = a.transpose();
    h.block(m, m + n, n, 1) = b;
    h.block(m + n, m, 1, n) = b.transpose();
    h(m + n, m + n) = qd.cwiseProduct(p.d).sum();
  }
  return h;
}

}  // namespace

DualGradient dual_gradient(const DualPoint& dp, const DiscreteProblem& p) {
  return gradient_from_sums(coupling_sums(to_coupling(dp), p), p);
}

Matrix dual_hessian(const DualPoint& dp, const DiscreteProblem& p, std::size_t cap) {
  const std::size_t k = p.m() + p.n() + 1;
  if (k > cap)
    throw std::length_error("dual Hessian of size " + std::to_string(k) + " exceeds the cap " +
                            std::to_string(cap));
  return assemble_hessian(materialize(to_coupling(dp), p), p, true);
}

DualPoint gauge_normalize(DualPoint dp) {
  const auto m = static_cast<double>(dp.alpha.size());
  const auto n = static_cast<double>(dp.beta.size());
  if (m + n == 0) return dp;
  const double s = (dp.beta.sum() - dp.alpha.sum()) / (m + n);
  dp.alpha.array() += s;
  dp.beta.array() -= s;
  return dp;
}

Vector gauge_direction(std::size_t m, std::size_t n) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(m + n + 1));
  v.head(static_cast<Eigen::Index>(m)).setOnes();
  v.segment(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).setConstant(-1.0);
  return v;
}

namespace {

struct NewtonOutcome {
  DualPoint x;
  SolveStatus status = SolveStatus::MaxIters;
  std::string message;
};

TraceRow oracle_row(int iter, const DualPoint& x, const CouplingSums& s, const DiscreteProblem& p) {
  TraceRow row;
  row.iter = iter;
  row.r_phi = (s.row - p.p_x).cwiseAbs().sum();
  row.r_psi = (s.col - p.p_y).cwiseAbs().sum();
  const double f = s.metric - p.t;
  row.r_lambda = (x.lam == 0.0 && f <= 0.0) ? 0.0 : std::abs(f);
  row.dual_objective = s.mass + x.alpha.dot(p.p_x) + x.beta.dot(p.p_y) + x.lam * p.t;
  row.lm_rate_nats = s.entropy + p.entropy_x + p.entropy_y;
  row.lambda = x.lam;
  row.alpha_spread = x.alpha.maxCoeff() - x.alpha.minCoeff();
  row.beta_spread = x.beta.maxCoeff() - x.beta.minCoeff();
  return row;
}

double safe_objective(const DualPoint& x, const DiscreteProblem& p) {
  try {
    return dual_objective(x, p);
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

NewtonOutcome newton_phase(const DiscreteProblem& p, DualPoint x, bool free_lam,
                           const OracleOptions& opts, std::vector<TraceRow>& rows) {
  const auto m = static_cast<Eigen::Index>(p.m());
  const auto n = static_cast<Eigen::Index>(p.n());
  const Eigen::Index k = m + n + (free_lam ? 1 : 0);
  Vector v = Vector::Zero(k);
  v.head(m).setOnes();
  v.segment(m, n).setConstant(-1.0);
  const double eps = std::numeric_limits<double>::epsilon();

  NewtonOutcome out;
  for (int it = 0; it < opts.max_iters; ++it) {
    // Balance <alpha, P_X> against <beta, P_Y> along the gauge; a drifted
    // gauge makes g a difference of large numbers.
    const double shift = 0.5 * (x.beta.dot(p.p_y) - x.alpha.dot(p.p_x));
    x.alpha.array() += shift;
    x.beta.array() -= shift;

    const Coupling q = to_coupling(x);
    CouplingSums sums;
    try {
      sums = coupling_sums(q, p);
    } catch (const NumericalError& e) {
      out.status = SolveStatus::NumericalFailure;
      out.message = e.what();
      break;
    }
    const DualGradient gr = gradient_from_sums(sums, p);
    rows.push_back(oracle_row(static_cast<int>(rows.size()) + 1, x, sums, p));

    Vector grad(k);
    if (free_lam) grad << gr.alpha, gr.beta, gr.lam;
    else grad << gr.alpha, gr.beta;
    if (grad.cwiseAbs().maxCoeff() <= opts.tol) {
      out.status = SolveStatus::Converged;
      break;
    }

    const Matrix h = assemble_hessian(materialize(q, p), p, free_lam);
    const Vector scale = h.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    Matrix hs = scale.asDiagonal() * h * scale.asDiagonal();
    const Vector vs = v.cwiseQuotient(scale).normalized();
    hs.noalias() += vs * vs.transpose();
    const Vector rhs = -scale.cwiseProduct(grad);

    Vector y;
    Eigen::LLT<Matrix> llt(hs);
    if (llt.info() == Eigen::Success) {
      y = llt.solve(rhs);
    } else {
      Eigen::LDLT<Matrix> ldlt(hs);
      if (ldlt.info() != Eigen::Success) {
        out.status = SolveStatus::NumericalFailure;
        out.message = "Newton system factorisation failed";
        break;
      }
      y = ldlt.solve(rhs);
    }
    Vector step = scale.cwiseProduct(y);
    step -= (step.dot(v) / v.squaredNorm()) * v;
    double slope = grad.dot(step);
    if (!step.allFinite() || !(slope < 0.0)) {
      step = -scale.cwiseProduct(scale).cwiseProduct(grad);
      step -= (step.dot(v) / v.squaredNorm()) * v;
      slope = grad.dot(step);
    }

    double t = 1.0;
    if (free_lam && step[k - 1] < 0.0) {
      // Keep lam >= 0; a step that would cross zero is shortened to land
      // one tenth of the way from the boundary.
      const double reach = x.lam / -step[k - 1];
      if (reach < 1.0) t = 0.9 * reach;
      if (!(t > 0.0)) {
        step[k - 1] = 0.0;
        slope = grad.dot(step);
        t = 1.0;
      }
    }

    const double g0 = oracle_row(0, x, sums, p).dual_objective;
    const double slack = 10.0 * eps * std::max(1.0, std::abs(g0));
    bool accepted = false;
    DualPoint trial = x;
    for (int ls = 0; ls < 80; ++ls) {
      trial.alpha = x.alpha + t * step.head(m);
      trial.beta = x.beta + t * step.segment(m, n);
      if (free_lam) trial.lam = std::max(0.0, x.lam + t * step[k - 1]);
      const double g1 = safe_objective(trial, p);
      if (g1 <= g0 + 1e-4 * t * slope + slack) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.status = SolveStatus::NumericalFailure;
      out.message = "line search failed to decrease the dual objective";
      break;
    }
    x = std::move(trial);
  }
  out.x = std::move(x);
  return out;
}

}  // namespace

SolveReport newton_oracle(const DiscreteProblem& p, const OracleOptions& opts) {
  const std::size_t k = p.m() + p.n() + 1;
  if (k > opts.hessian_cap)
    throw std::length_error("Newton oracle: M+N+1 = " + std::to_string(k) + " exceeds the cap " +
                            std::to_string(opts.hessian_cap));
  const auto start = std::chrono::steady_clock::now();

  DualPoint x0;
  if (opts.start) {
    x0 = *opts.start;
  } else {
    x0 = to_dual(product_coupling(p));
  }
  const double lam_start = x0.lam;
  x0.lam = 0.0;

  SolveReport rep;
  rep.strategy = LambdaStrategy::RootFind;
  {
    const CouplingSums s0 = coupling_sums(to_coupling(x0), p);
    rep.initial = oracle_row(0, x0, s0, p);
  }

  NewtonOutcome res = newton_phase(p, x0, false, opts, rep.trace);
  if (res.status == SolveStatus::Converged) {
    const DualGradient g = dual_gradient(res.x, p);
    if (g.lam < -opts.tol) {
      DualPoint x1 = res.x;
      x1.lam = lam_start;
      res = newton_phase(p, x1, true, opts, rep.trace);
    }
  }

  rep.status = res.status;
  rep.message = res.message;
  if (res.status == SolveStatus::NumericalFailure) rep.failure_iter = static_cast<int>(rep.trace.size());
  rep.solution = to_coupling(gauge_normalize(res.x));
  rep.lambda_final = res.x.lam;
  rep.iterations = static_cast<int>(rep.trace.size());
  rep.lm_rate_nats = lm_rate(rep.solution, p);
  rep.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

ScarlettDualPoint scarlett_from_coupling(const Coupling& q, const DiscreteProblem& p) {
  return ScarlettDualPoint{q.lam, (q.log_phi - p.log_p_x)};
}

double scarlett_dual_value(const ScarlettDualPoint& sp, const DiscreteProblem& p) {
  if (!(sp.zeta >= 0.0)) throw std::invalid_argument("zeta must be non-negative");
  if (sp.a.size() != p.d.rows()) throw std::invalid_argument("a has the wrong length");
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  // Per-output log normaliser log sum_k P_X(k) exp(-zeta d_kj + a_k).
  Vector top = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double c = p.log_p_x[i] + sp.a[i];
    for (Eigen::Index j = 0; j < n; ++j) top[j] = std::max(top[j], c - sp.zeta * p.d(i, j));
  }
  Vector acc = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double c = p.log_p_x[i] + sp.a[i];
    for (Eigen::Index j = 0; j < n; ++j) acc[j] += std::exp(c - sp.zeta * p.d(i, j) - top[j]);
  }
  const Vector lognorm = top.array() + acc.array().log();

  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = p.w(i, j);
      if (w > 0.0) row += w * (sp.a[i] - sp.zeta * p.d(i, j) - lognorm[j]);
    }
    total += p.p_x[i] * row;
  }
  return total;
}

KernelReport kernel_structure(const Matrix& d, double rel_tol) {
  const auto m = d.rows();
  const auto n = d.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m * n, m + n + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index r = i * n + j;
      a(r, i) = 1.0;
      a(r, m + j) = 1.0;
      a(r, m + n) = d(i, j);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  KernelReport rep;
  rep.singular_values = svd.singularValues();
  const double cutoff = rel_tol * (rep.singular_values.size() ? rep.singular_values[0] : 0.0);
  const auto cols = static_cast<int>(a.cols());
  for (Eigen::Index k = 0; k < rep.singular_values.size(); ++k)
    if (rep.singular_values[k] > cutoff) ++rep.rank;
  rep.nullity = cols - rep.rank;
  if (rep.nullity >= 1) {
    const Vector null = svd.matrixV().col(rep.rank);
    const Vector g = gauge_direction(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
    rep.alignment = std::abs(null.dot(g)) / (null.norm() * g.norm());
  }
  rep.gauge_only = rep.nullity == 1 && rep.alignment > 1.0 - 1e-10;
  rep.degenerate = rep.nullity > 1;
  return rep;
}

int numerical_rank(const Matrix& a, double rel_tol) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  const auto diag = r.diagonal().cwiseAbs();
  const double top = diag.size() ? diag.maxCoeff() : 0.0;
  int rank = 0;
  for (Eigen::Index k = 0; k < diag.size(); ++k)
    if (diag[k] > rel_tol * top) ++rank;
  return rank;
}

ConvergenceCertificate certificate(const SolveReport& rep, const DiscreteProblem& p, double g_star,
                                   std::string g_star_source) {
  ConvergenceCertificate c;
  c.g_star = g_star;
  c.g_star_source = std::move(g_star_source);
  c.tau = rep.tau;
  c.m_d = p.max_d;

  double lam_prev = rep.initial.lambda;
  double lam_sup = rep.initial.lambda;
  for (const TraceRow& r : rep.trace) {
    c.delta = std::max(c.delta, std::abs(r.lambda - lam_prev));
    lam_prev = r.lambda;
    lam_sup = std::max(lam_sup, r.lambda);
  }
  c.m_lambda = lam_sup / 2.0;
  c.l_lambda = c.m_d * c.m_d * std::exp(c.delta * c.m_d);

  // min_ij exp(-2 d_ij M_lambda) is attained at the largest d.
  const double log_c_d = -2.0 * c.m_d * c.m_lambda;
  c.c_d = std::exp(log_c_d);

  if (std::isfinite(c.l_lambda) && c.l_lambda > 0.0)
    c.m0 = std::max(c.m_lambda / (c.tau * c.l_lambda), 2.0 * c.m_d / c.l_lambda);
  const double ratio_x = p.p_x.minCoeff() / p.p_x.maxCoeff();
  const double ratio_y = p.p_y.minCoeff() / p.p_y.maxCoeff();
  const double log_bound = -(log_c_d + std::log(std::min(ratio_x, ratio_y)));
  c.s0 = std::max(c.m0, log_bound);

  c.max_spread = std::max(rep.initial.alpha_spread, rep.initial.beta_spread);
  for (const TraceRow& r : rep.trace) c.max_spread = std::max({c.max_spread, r.alpha_spread, r.beta_spread});
  c.spreads_bounded = c.max_spread <= c.s0;

  c.errors.reserve(rep.trace.size() + 1);
  c.errors.push_back(rep.initial.dual_objective - g_star);
  for (const TraceRow& r : rep.trace) c.errors.push_back(r.dual_objective - g_star);
  for (std::size_t l = 0; l < c.errors.size(); ++l) {
    if (c.errors[l] < -1e-10)
      throw std::runtime_error("inconsistent oracle: dual value at iteration " + std::to_string(l) +
                               " lies below g_star by " + std::to_string(-c.errors[l]));
  }
  c.e0 = c.errors.front();

  const double inf = std::numeric_limits<double>::infinity();
  auto inv = [&](double e) { return e > 0.0 ? 1.0 / e : inf; };
  const double rate = (std::isfinite(c.l_lambda) && std::isfinite(c.s0) && c.s0 > 0.0)
                          ? 1.0 / (8.0 * c.s0 * c.s0 * (1.0 + c.l_lambda))
                          : 0.0;
  c.bound_satisfied = true;
  c.worst_margin = inf;
  for (std::size_t l = 0; l + 1 < c.errors.size(); ++l) {
    const double lhs = inv(c.errors[l + 1]);
    const double rhs = inv(c.e0) + static_cast<double>(l + 1) * rate;
    const double margin = std::isinf(lhs) ? inf : lhs / rhs - 1.0;
    if (margin < c.worst_margin) {
      c.worst_margin = margin;
      c.worst_iter = static_cast<int>(l + 1);
    }
    if (!(lhs >= rhs)) c.bound_satisfied = false;
  }
  return c;
}

}  // namespace lmrate
