#include "lmrate/sinkhorn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "lmrate/dual.hpp"

namespace lmrate {

std::string_view to_string(LambdaStrategy s) {
  switch (s) {
    case LambdaStrategy::GradientProjection: return "project";
    case LambdaStrategy::RootFind: return "root";
  }
  return "unknown";
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIters: return "max_iters";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

void validate_config(const SolverConfig& cfg) {
  if (cfg.max_iters < 1) throw std::invalid_argument("max_iters: must be at least 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("tol: must be positive");
  if (cfg.tau && !(*cfg.tau > 0.0 && std::isfinite(*cfg.tau)))
    throw std::invalid_argument("tau: must be positive and finite");
  if (!(cfg.lambda_init >= 0.0 && std::isfinite(cfg.lambda_init)))
    throw std::invalid_argument("lambda_init: must be non-negative and finite");
}

LambdaStrategy resolve_strategy(const SolverConfig& cfg, const DiscreteProblem& p) {
  if (cfg.lambda_strategy) return *cfg.lambda_strategy;
  return (!p.x_neg.empty() && !p.y_neg.empty()) ? LambdaStrategy::RootFind
                                                : LambdaStrategy::GradientProjection;
}

double default_step_size(const DiscreteProblem& p) {
  if (!(p.max_d > 0.0)) return 1.0;
  return 1.0 / (p.max_d * p.max_d);
}

double curvature_step_size(const DiscreteProblem& p) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < p.d.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < p.d.cols(); ++j) row += p.p_y[j] * p.d(i, j) * p.d(i, j);
    c += p.p_x[i] * row;
  }
  return c > 0.0 ? 1.0 / c : 1.0;
}

double Residuals::max() const { return std::max({r_phi, r_psi, r_lambda}); }

SinkhornState initial_state(const DiscreteProblem& p, double lambda_init) {
  SinkhornState s;
  s.q.log_phi = Vector::Zero(p.d.rows());
  s.q.log_psi = Vector::Zero(p.d.cols());
  s.q.lam = lambda_init;
  return s;
}

namespace {

constexpr double kExpLimit = 700.0;

bool in_plain_range(const Vector& v) {
  return v.size() == 0 || (v.maxCoeff() < kExpLimit && v.minCoeff() > -kExpLimit);
}

// Plain-domain step. Returns false when a denominator leaves the double
// range so the caller can redo the step in log coordinates.
bool plain_step(const SinkhornState& s, const DiscreteProblem& p, Vector& log_phi,
                Vector& log_psi) {
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  const double lam = s.q.lam;
  const Vector psi = s.q.log_psi.array().exp().matrix();

  Vector phi(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += std::exp(-lam * p.d(i, j)) * psi[j];
    if (!(acc > 0.0) || !std::isfinite(acc)) return false;
    phi[i] = p.p_x[i] / acc;
  }
  Vector col = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double f = phi[i];
    for (Eigen::Index j = 0; j < n; ++j) col[j] += std::exp(-lam * p.d(i, j)) * f;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(col[j] > 0.0) || !std::isfinite(col[j])) return false;
  }
  log_phi = phi.array().log().matrix();
  log_psi = (p.log_p_y.array() - col.array().log()).matrix();
  return log_phi.allFinite() && log_psi.allFinite();
}

void log_step(const SinkhornState& s, const DiscreteProblem& p, Vector& log_phi,
              Vector& log_psi) {
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  const double lam = s.q.lam;
  const double ninf = -std::numeric_limits<double>::infinity();

  log_phi.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double top = ninf;
    for (Eigen::Index j = 0; j < n; ++j) top = std::max(top, s.q.log_psi[j] - lam * p.d(i, j));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += std::exp(s.q.log_psi[j] - lam * p.d(i, j) - top);
    log_phi[i] = p.log_p_x[i] - (top + std::log(acc));
  }

  Vector top = Vector::Constant(n, ninf);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) top[j] = std::max(top[j], log_phi[i] - lam * p.d(i, j));
  Vector acc = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) acc[j] += std::exp(log_phi[i] - lam * p.d(i, j) - top[j]);
  log_psi = (p.log_p_y.array() - top.array() - acc.array().log()).matrix();

  if (!log_phi.allFinite() || !log_psi.allFinite())
    throw NumericalError("log-domain scaling produced a non-finite factor");
}

// log(F(lam) + T) - log(T) and its derivative in lam, streamed with a
// running maximum so that no term overflows.
struct LogMultiplier {
  double h = 0.0;
  double dh = 0.0;
  bool empty = false;  // every d_ij is zero, so F = -T
};

LogMultiplier log_multiplier(const Coupling& q, const DiscreteProblem& p, double lam) {
  double top = -std::numeric_limits<double>::infinity();
  double s1 = 0.0;  // sum d e^{a - top}
  double s2 = 0.0;  // sum d^2 e^{a - top}
  for (Eigen::Index i = 0; i < p.d.rows(); ++i) {
    const double lp = q.log_phi[i];
    for (Eigen::Index j = 0; j < p.d.cols(); ++j) {
      const double dij = p.d(i, j);
      if (!(dij > 0.0)) continue;
      const double a = lp + q.log_psi[j] - lam * dij;
      if (a > top) {
        const double r = std::exp(top - a);
        s1 = s1 * r + dij;
        s2 = s2 * r + dij * dij;
        top = a;
      } else {
        const double e = std::exp(a - top);
        s1 += dij * e;
        s2 += dij * dij * e;
      }
    }
  }
  LogMultiplier out;
  if (!(s1 > 0.0)) {
    out.empty = true;
    return out;
  }
  out.h = top + std::log(s1) - std::log(p.t);
  out.dh = -s2 / s1;
  if (!std::isfinite(out.h) || !std::isfinite(out.dh))
    throw NumericalError("multiplier function is not finite");
  return out;
}

double multiplier_from_log(const LogMultiplier& lm, double t) {
  return lm.empty ? -t : t * std::expm1(lm.h);
}

}  // namespace

SinkhornState sinkhorn_step(const SinkhornState& s, const DiscreteProblem& p,
                            const SolverConfig& cfg) {
  SinkhornState out = s;
  const bool plain_ok = !cfg.force_log_domain && s.q.lam * p.max_d <= kExpLimit &&
                        in_plain_range(s.q.log_psi);
  if (plain_ok && plain_step(s, p, out.q.log_phi, out.q.log_psi) &&
      in_plain_range(out.q.log_phi) && in_plain_range(out.q.log_psi)) {
    return out;
  }
  if (!cfg.force_log_domain && !cfg.log_domain)
    throw NumericalError("scaling left the double range and the log-domain fallback is off");
  log_step(s, p, out.q.log_phi, out.q.log_psi);
  return out;
}

double multiplier_function(const SinkhornState& s, const DiscreteProblem& p, double lam) {
  return multiplier_from_log(log_multiplier(s.q, p, lam), p.t);
}

SinkhornState update_lambda_projection(const SinkhornState& s, const DiscreteProblem& p,
                                       double tau) {
  SinkhornState out = s;
  const double f = multiplier_function(s, p, s.q.lam);
  out.q.lam = std::max(0.0, s.q.lam + tau * f);
  return out;
}

SinkhornState update_lambda_rootfind(const SinkhornState& s, const DiscreteProblem& p) {
  constexpr double kRootTol = 1e-13;
  constexpr double kBracketCap = 1e6;
  SinkhornState out = s;
  auto eval = [&](double x) { return log_multiplier(s.q, p, x); };

  const LogMultiplier at0 = eval(0.0);
  if (at0.empty || at0.h <= 0.0) {
    out.q.lam = 0.0;
    return out;
  }

  double lo = 0.0;
  LogMultiplier f_lo = at0;
  double hi = std::numeric_limits<double>::quiet_NaN();
  if (s.q.lam > 0.0) {
    const LogMultiplier w = eval(s.q.lam);
    if (w.h > 0.0) {
      lo = s.q.lam;
      f_lo = w;
    } else if (w.h < 0.0) {
      hi = s.q.lam;
    } else {
      return out;
    }
  }
  if (std::isnan(hi)) {
    hi = std::max(1.0, 2.0 * lo);
    for (;;) {
      const LogMultiplier w = eval(hi);
      if (w.h < 0.0) break;
      if (w.h == 0.0) {
        out.q.lam = hi;
        return out;
      }
      lo = hi;
      f_lo = w;
      hi *= 2.0;
      if (hi > kBracketCap) throw NumericalError("multiplier root bracket exceeded 1e6");
    }
  }

  // h is convex and decreasing, so Newton from the left stays left of the
  // root; the bracket guards against rounding.
  double x = lo;
  LogMultiplier fx = f_lo;
  for (int k = 0; k < 200; ++k) {
    if (std::abs(std::expm1(fx.h)) <= kRootTol) break;
    double next = fx.dh < 0.0 ? x - fx.h / fx.dh : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    const LogMultiplier fn = eval(next);
    x = next;
    fx = fn;
    if (fn.h > 0.0) lo = next;
    else if (fn.h < 0.0) hi = next;
    else break;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  out.q.lam = x;
  return out;
}

namespace {

Residuals residuals_from_sums(const CouplingSums& sums, const DiscreteProblem& p, double lam) {
  Residuals r;
  r.r_phi = (sums.row - p.p_x).cwiseAbs().sum();
  r.r_psi = (sums.col - p.p_y).cwiseAbs().sum();
  const double f = sums.metric - p.t;
  r.r_lambda = (lam == 0.0 && f <= 0.0) ? 0.0 : std::abs(f);
  return r;
}

double spread(const Vector& v) { return v.size() ? v.maxCoeff() - v.minCoeff() : 0.0; }

TraceRow make_row(int iter, const SinkhornState& s, const DiscreteProblem& p) {
  const CouplingSums sums = coupling_sums(s.q, p);
  const Residuals r = residuals_from_sums(sums, p, s.q.lam);
  TraceRow row;
  row.iter = iter;
  row.r_phi = r.r_phi;
  row.r_psi = r.r_psi;
  row.r_lambda = r.r_lambda;
  row.dual_objective = dual_objective(s.q, p, sums);
  row.lm_rate_nats = sums.entropy + p.entropy_x + p.entropy_y;
  row.lambda = s.q.lam;
  row.f_at_zero = multiplier_function(s, p, 0.0);
  row.alpha_spread = spread(s.q.log_phi);
  row.beta_spread = spread(s.q.log_psi);
  return row;
}

}  // namespace

bool refine_newton(SinkhornState& s, const DiscreteProblem& p, double tol, int max_steps,
                   std::vector<TraceRow>& trace) {
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  const double tiny = std::numeric_limits<double>::min();
  const double eps = std::numeric_limits<double>::epsilon();

  auto objective = [&](const Coupling& q) {
    try {
      return dual_objective(q, p);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  for (int step = 0; step <= max_steps; ++step) {
    const CouplingSums sums = coupling_sums(s.q, p);
    const Residuals r = residuals_from_sums(sums, p, s.q.lam);
    if (step > 0) {
      TraceRow row = make_row(static_cast<int>(trace.size()) + 1, s, p);
      s.res = r;
      trace.push_back(row);
    }
    if (r.max() <= tol) return true;
    if (step == max_steps) break;

    const Matrix q = materialize(s.q, p, std::numeric_limits<std::size_t>::max());
    const Vector gu = sums.row - p.p_x;
    const Vector gv = sums.col - p.p_y;
    const double gl = p.t - sums.metric;
    const bool free_lam = s.q.lam > 0.0 || gl < 0.0;
    const Eigen::Index k = m + (free_lam ? 1 : 0);

    const Vector c = sums.col.cwiseMax(tiny);
    Vector mean_d(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double b = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) b += q(i, j) * p.d(i, j);
      mean_d[j] = b / c[j];
    }

    // Schur complement of the diagonal psi block. The (u, u) part is kept
    // in Laplacian form so nearly decoupled rows do not cancel.
    Eigen::MatrixXd sc = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index l = i + 1; l < m; ++l) {
        double kil = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) kil += q(i, j) * q(l, j) / c[j];
        sc(i, l) = sc(l, i) = -kil;
        sc(i, i) += kil;
        sc(l, l) += kil;
      }
      double cross = 0.0, back = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        cross += q(i, j) * (p.d(i, j) - mean_d[j]);
        back += q(i, j) * gv[j] / c[j];
      }
      if (free_lam) sc(i, m) = sc(m, i) = -cross;
      rhs[i] = -gu[i] + back;
    }
    if (free_lam) {
      double var = 0.0, back = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
          const double dev = p.d(i, j) - mean_d[j];
          var += q(i, j) * dev * dev;
        }
        back += mean_d[j] * gv[j];
      }
      sc(m, m) = var;
      rhs[m] = -gl - back;
    }

    const Eigen::VectorXd scale = sc.diagonal().cwiseMax(tiny).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd ss = scale.asDiagonal() * sc * scale.asDiagonal();
    Eigen::VectorXd gauge = Eigen::VectorXd::Zero(k);
    gauge.head(m).setOnes();
    const Eigen::VectorXd gs = gauge.cwiseQuotient(scale).normalized();
    ss.noalias() += gs * gs.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ss);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd x = scale.cwiseProduct(ldlt.solve(scale.cwiseProduct(rhs)));
    if (!x.allFinite()) return false;

    const Vector du = x.head(m);
    const double dl = free_lam ? x[m] : 0.0;
    Vector dv(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = -gv[j];
      for (Eigen::Index i = 0; i < m; ++i) acc -= q(i, j) * (du[i] - p.d(i, j) * dl);
      dv[j] = acc / c[j];
    }

    double t = 1.0;
    if (dl < 0.0 && s.q.lam + dl < 0.0) t = 0.9 * s.q.lam / -dl;
    const double slope = gu.dot(du) + gv.dot(dv) + gl * dl;
    if (!(slope < 0.0)) return false;

    const double g0 = dual_objective(s.q, p, sums);
    const double slack = 10.0 * eps * std::max(1.0, std::abs(g0));
    bool accepted = false;
    Coupling trial = s.q;
    for (int ls = 0; ls < 60 && t > 0.0; ++ls) {
      trial.log_phi = s.q.log_phi + t * du;
      trial.log_psi = s.q.log_psi + t * dv;
      trial.lam = std::max(0.0, s.q.lam + t * dl);
      if (objective(trial) <= g0 + 1e-4 * t * slope + slack) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return false;
    s.q = std::move(trial);
    s.iter += 1;
  }
  return false;
}

Residuals residuals(const SinkhornState& s, const DiscreteProblem& p) {
  return residuals_from_sums(coupling_sums(s.q, p), p, s.q.lam);
}

Residuals SolveReport::final_residuals() const {
  if (trace.empty()) return Residuals{initial.r_phi, initial.r_psi, initial.r_lambda};
  const TraceRow& r = trace.back();
  return Residuals{r.r_phi, r.r_psi, r.r_lambda};
}

SolveReport solve(const DiscreteProblem& p, const SolverConfig& cfg) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();

  SolveReport rep;
  rep.strategy = resolve_strategy(cfg, p);
  rep.tau = cfg.tau ? *cfg.tau : default_step_size(p);

  SinkhornState s = initial_state(p, cfg.lambda_init);
  try {
    rep.initial = make_row(0, s, p);
  } catch (const NumericalError& e) {
    rep.status = SolveStatus::NumericalFailure;
    rep.failure_iter = 0;
    rep.message = e.what();
  }

  if (rep.status != SolveStatus::NumericalFailure) {
    rep.trace.reserve(static_cast<std::size_t>(cfg.max_iters));
    for (int it = 1; it <= cfg.max_iters; ++it) {
      try {
        SinkhornState next = sinkhorn_step(s, p, cfg);
        next = rep.strategy == LambdaStrategy::RootFind
                   ? update_lambda_rootfind(next, p)
                   : update_lambda_projection(next, p, rep.tau);
        next.iter = it;
        TraceRow row = make_row(it, next, p);
        next.res = Residuals{row.r_phi, row.r_psi, row.r_lambda};
        s = std::move(next);
        rep.trace.push_back(row);
      } catch (const NumericalError& e) {
        rep.status = SolveStatus::NumericalFailure;
        rep.failure_iter = it;
        rep.message = e.what();
        break;
      }
      if (s.res.max() <= cfg.tol) {
        rep.status = SolveStatus::Converged;
        break;
      }
    }
  }

  if (rep.status == SolveStatus::MaxIters && cfg.refine) {
    rep.refine_start = static_cast<int>(rep.trace.size());
    try {
      if (refine_newton(s, p, cfg.tol, cfg.refine_max_steps, rep.trace)) {
        rep.status = SolveStatus::Converged;
      } else {
        rep.message = "Newton refinement stopped before reaching tol";
      }
    } catch (const NumericalError& e) {
      rep.status = SolveStatus::NumericalFailure;
      rep.failure_iter = static_cast<int>(rep.trace.size()) + 1;
      rep.message = e.what();
    }
  }

  rep.solution = s.q;
  rep.lambda_final = s.q.lam;
  rep.iterations = static_cast<int>(rep.trace.size());
  rep.lm_rate_nats = rep.trace.empty() ? rep.initial.lm_rate_nats : rep.trace.back().lm_rate_nats;
  rep.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace lmrate
