#include "lmrate/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lmrate {

namespace {

const double kLogMinNormal = std::log(std::numeric_limits<double>::min());

std::string describe(const char* what, double value) {
  std::ostringstream os;
  os.precision(17);
  os << what << " (" << value << ")";
  return os.str();
}

void fill_derived(DiscreteProblem& p) {
  p.log_p_x = p.p_x.array().log().matrix();
  p.log_p_y = p.p_y.array().log().matrix();
  p.max_d = p.d.size() > 0 ? p.d.maxCoeff() : 0.0;
  p.entropy_x = shannon_entropy(p.p_x);
  p.entropy_y = shannon_entropy(p.p_y);
}

}  // namespace

// With a symmetric input law the terms of negated inputs are added pairwise
// first, which makes p_y[j] and p_y[neg j] bit-identical.
Vector output_marginal(const Vector& p_x, const Matrix& w, const std::vector<std::size_t>& x_neg) {
  bool paired = !x_neg.empty();
  for (std::size_t i = 0; paired && i < x_neg.size(); ++i)
    paired = p_x[static_cast<Eigen::Index>(i)] == p_x[static_cast<Eigen::Index>(x_neg[i])];

  Vector p_y = Vector::Zero(w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (!paired) {
      p_y += w.row(i).transpose() * p_x[i];
      continue;
    }
    const auto ni = static_cast<Eigen::Index>(x_neg[static_cast<std::size_t>(i)]);
    if (ni < i) continue;
    if (ni == i) p_y += w.row(i).transpose() * p_x[i];
    else p_y += (w.row(i).transpose() * p_x[i] + w.row(ni).transpose() * p_x[ni]);
  }
  return p_y;
}

double expected_metric(const Matrix& d, const Vector& p_x, const Matrix& w) {
  double t = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    // Same accumulation order as constraint_gap on joint_law, so the true
    // joint law has a gap of exactly zero.
    double row = 0.0;
    for (Eigen::Index j = 0; j < d.cols(); ++j) row += (w(i, j) * p_x[i]) * d(i, j);
    t += row;
  }
  return t;
}

DiscreteProblem make_problem(Matrix d, Vector p_x, Matrix w, std::optional<double> threshold,
                             std::vector<std::size_t> x_neg, std::vector<std::size_t> y_neg) {
  if (d.rows() == 0 || d.cols() == 0) throw std::invalid_argument("metric matrix is empty");
  if (w.rows() != d.rows() || w.cols() != d.cols())
    throw std::invalid_argument("channel kernel and metric differ in shape");
  if (p_x.size() != d.rows()) throw std::invalid_argument("p_x length does not match metric rows");
  if (!x_neg.empty() && x_neg.size() != static_cast<std::size_t>(d.rows()))
    throw std::invalid_argument("x_neg length does not match metric rows");
  if (!y_neg.empty() && y_neg.size() != static_cast<std::size_t>(d.cols()))
    throw std::invalid_argument("y_neg length does not match metric columns");

  DiscreteProblem p;
  p.p_y = output_marginal(p_x, w, x_neg);
  p.t = threshold ? *threshold : expected_metric(d, p_x, w);
  p.threshold_overridden = threshold.has_value();
  p.d = std::move(d);
  p.p_x = std::move(p_x);
  p.w = std::move(w);
  p.x_neg = std::move(x_neg);
  p.y_neg = std::move(y_neg);
  fill_derived(p);
  return p;
}

DiscreteProblem with_threshold(DiscreteProblem p, double t) {
  p.t = t;
  p.threshold_overridden = true;
  return p;
}

std::vector<std::string> validate_problem(const DiscreteProblem& p, double tol) {
  std::vector<std::string> out;
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  if (m == 0 || n == 0) {
    out.emplace_back("metric matrix is empty");
    return out;
  }
  if (p.p_x.size() != m || p.p_y.size() != n || p.w.rows() != m || p.w.cols() != n) {
    out.emplace_back("shape mismatch between d, w, p_x and p_y");
    return out;
  }
  if (!p.d.allFinite() || !p.w.allFinite() || !p.p_x.allFinite() || !p.p_y.allFinite() ||
      !std::isfinite(p.t)) {
    out.emplace_back("non-finite entries");
    return out;
  }
  if (p.p_x.minCoeff() <= 0.0) out.push_back(describe("p_x has a non-positive entry", p.p_x.minCoeff()));
  if (p.p_y.minCoeff() <= 0.0) out.push_back(describe("p_y has a non-positive entry", p.p_y.minCoeff()));
  if (std::abs(p.p_x.sum() - 1.0) > tol) out.push_back(describe("p_x does not sum to 1", p.p_x.sum()));
  if (p.d.minCoeff() < 0.0) out.push_back(describe("metric has a negative entry", p.d.minCoeff()));
  if (p.w.minCoeff() < 0.0) out.push_back(describe("kernel has a negative entry", p.w.minCoeff()));

  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = p.w.row(i).sum();
    if (std::abs(s - 1.0) > tol) {
      out.push_back(describe(("kernel row " + std::to_string(i) + " does not sum to 1").c_str(), s));
      break;
    }
  }
  Vector marginal = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) marginal += p.p_x[i] * p.w.row(i).transpose();
  const double marginal_err = (marginal - p.p_y).cwiseAbs().maxCoeff();
  if (marginal_err > tol) out.push_back(describe("p_y is not the output marginal of (p_x, w)", marginal_err));

  if (!p.threshold_overridden) {
    const double t = expected_metric(p.d, p.p_x, p.w);
    if (std::abs(t - p.t) > tol * std::max(1.0, std::abs(t)))
      out.push_back(describe("t differs from the expected metric of the joint law", p.t - t));
  }

  if (!p.x_neg.empty() && !p.y_neg.empty()) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto ni = static_cast<Eigen::Index>(p.x_neg[i]);
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto nj = static_cast<Eigen::Index>(p.y_neg[j]);
        if (p.d(i, j) != p.d(ni, nj)) {
          out.emplace_back("metric is not centrally symmetric at (" + std::to_string(i) + ", " +
                           std::to_string(j) + ")");
          return out;
        }
      }
    }
  }
  return out;
}

double shannon_entropy(const Vector& probs) {
  double h = 0.0;
  for (double v : probs) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

Coupling Coupling::from_scalings(const Vector& phi, const Vector& psi, double lam) {
  return Coupling{phi.array().log().matrix(), psi.array().log().matrix(), lam};
}

Coupling product_coupling(const DiscreteProblem& p) {
  return Coupling{p.log_p_x, p.log_p_y, 0.0};
}

CouplingSums coupling_sums(const Coupling& q, const DiscreteProblem& p) {
  const auto m = p.d.rows();
  const auto n = p.d.cols();
  if (q.log_phi.size() != m || q.log_psi.size() != n)
    throw std::invalid_argument("coupling factors do not match the problem shape");
  if (!q.log_phi.allFinite() || !q.log_psi.allFinite() || !std::isfinite(q.lam))
    throw NumericalError("coupling has a non-finite factor");

  CouplingSums s;
  s.row = Vector::Zero(m);
  s.col = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lp = q.log_phi[i];
    double row = 0.0, metric = 0.0, entropy = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dij = p.d(i, j);
      const double lq = lp + q.log_psi[j] - q.lam * dij;
      if (lq < kLogMinNormal) continue;
      const double v = std::exp(lq);
      row += v;
      metric += v * dij;
      entropy += v * lq;
      s.col[j] += v;
    }
    s.row[i] = row;
    s.mass += row;
    s.metric += metric;
    s.entropy += entropy;
  }
  if (!std::isfinite(s.mass) || !std::isfinite(s.metric) || !std::isfinite(s.entropy))
    throw NumericalError("coupling mass overflowed");
  return s;
}

Matrix materialize(const Coupling& q, const DiscreteProblem& p, std::size_t max_entries) {
  if (p.m() * p.n() > max_entries)
    throw std::invalid_argument("coupling too large to materialise (" +
                                std::to_string(p.m() * p.n()) + " entries)");
  Matrix out(p.d.rows(), p.d.cols());
  for (Eigen::Index i = 0; i < p.d.rows(); ++i)
    for (Eigen::Index j = 0; j < p.d.cols(); ++j)
      out(i, j) = std::exp(q.log_phi[i] + q.log_psi[j] - q.lam * p.d(i, j));
  return out;
}

double primal_entropy(const Coupling& q, const DiscreteProblem& p) {
  return coupling_sums(q, p).entropy;
}

double primal_entropy(const Matrix& q) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      const double v = q(i, j);
      if (v > 0.0) row += v * std::log(v);
    }
    total += row;
  }
  return total;
}

double lm_rate(const Coupling& q, const DiscreteProblem& p) {
  return primal_entropy(q, p) + p.entropy_x + p.entropy_y;
}

double lm_rate(const Matrix& q, const DiscreteProblem& p) {
  return primal_entropy(q) + p.entropy_x + p.entropy_y;
}

double constraint_gap(const Coupling& q, const DiscreteProblem& p) {
  return p.t - coupling_sums(q, p).metric;
}

double constraint_gap(const Matrix& q, const DiscreteProblem& p) {
  double metric = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) row += q(i, j) * p.d(i, j);
    metric += row;
  }
  return p.t - metric;
}

Matrix joint_law(const DiscreteProblem& p) {
  Matrix q = p.w;
  for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) *= p.p_x[i];
  return q;
}

}  // namespace lmrate
