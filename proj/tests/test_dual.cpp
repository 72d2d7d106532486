#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lmrate/dual.hpp"
#include "lmrate/serialize.hpp"
#include "support.hpp"

using namespace lmrate;
using lmrate::testing::uniform;

namespace {

DualPoint random_point(std::mt19937_64& g, std::size_t m, std::size_t n) {
  DualPoint dp{Vector(m), Vector(n), uniform(g, 0.0, 1.0)};
  for (std::size_t i = 0; i < m; ++i) dp.alpha(i) = uniform(g, -1.0, 1.0);
  for (std::size_t j = 0; j < n; ++j) dp.beta(j) = uniform(g, -1.0, 1.0);
  return dp;
}

// P = (1/2, 1/2), D = [[0,1],[1,0]], T = 0.4.
DiscreteProblem two_by_two() {
  Matrix d(2, 2), w(2, 2);
  d << 0, 1, 1, 0;
  w << 0.6, 0.4, 0.4, 0.6;
  return make_problem(d, Vector::Constant(2, 0.5), w, 0.4, {1, 0}, {1, 0});
}

// Feasible couplings are [[a, 1/2 - a], [1/2 - a, a]] with 1 - 2a <= 0.4.
double brute_force_2x2() {
  double best = std::numeric_limits<double>::infinity();
  const int steps = 2'000'000;
  for (int k = 0; k <= steps; ++k) {
    const double a = 0.3 + 0.2 * k / steps;
    const double b = 0.5 - a;
    double v = 2.0 * a * std::log(a) + (b > 0 ? 2.0 * b * std::log(b) : 0.0);
    best = std::min(best, v + 2.0 * std::log(2.0));
  }
  return best;
}

}  // namespace

TEST_CASE("dual and scaling coordinates") {
  auto g = lmrate::testing::rng(2);
  const DualPoint dp = random_point(g, 3, 5);
  const DualPoint back = to_dual(to_coupling(dp));
  CHECK((back.alpha - dp.alpha).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.beta - dp.beta).cwiseAbs().maxCoeff() < 1e-15);
  const Coupling c = to_coupling(dp);
  CHECK(c.phi()(0) == doctest::Approx(std::exp(-dp.alpha(0) - 0.5)).epsilon(1e-15));
}

TEST_CASE("objective along the gauge and in the large coordinate limit") {
  auto g = lmrate::testing::rng(3);
  const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, 4, 5);
  DualPoint dp = random_point(g, 4, 5);
  const double g0 = dual_objective(dp, p);
  for (double s : {-3.0, 0.5, 7.0}) {
    DualPoint q = dp;
    q.alpha.array() += s;
    q.beta.array() -= s;
    CHECK(dual_objective(q, p) == doctest::Approx(g0).epsilon(1e-13));
  }
  DualPoint big = dp;
  big.alpha.setConstant(40.0);
  big.beta.setConstant(40.0);
  const double linear = 40.0 + 40.0 + big.lam * p.t;
  CHECK(std::abs(dual_objective(big, p) - linear) < 1e-30 + 1e-15 * linear);
}

TEST_CASE("gradient against central differences") {
  const auto inst = lmrate::testing::awgn_instance(Scheme::QPSK, 3);
  const DiscreteProblem& p = inst.problem;
  REQUIRE(p.m() == 4);
  REQUIRE(p.n() == 9);
  auto g = lmrate::testing::rng(4);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const DualPoint dp = random_point(g, 4, 9);
    const Vector an = dual_gradient(dp, p).stacked();
    Vector fd(14);
    for (int k = 0; k < 14; ++k) {
      DualPoint a = dp, b = dp;
      if (k < 4) {
        a.alpha(k) += h;
        b.alpha(k) -= h;
      } else if (k < 13) {
        a.beta(k - 4) += h;
        b.beta(k - 4) -= h;
      } else {
        a.lam += h;
        b.lam -= h;
      }
      fd(k) = (dual_objective(a, p) - dual_objective(b, p)) / (2 * h);
    }
    for (int k = 0; k < 14; ++k) {
      CAPTURE(trial);
      CAPTURE(k);
      CHECK(std::abs(fd(k) - an(k)) <= 1e-5 * std::max(std::abs(an(k)), 1e-3));
    }
  }
}

TEST_CASE("gradient bound on the multiplier component") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(8);
  auto g = lmrate::testing::rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    DualPoint dp = to_dual(product_coupling(p));
    dp.lam = uniform(g, 0.0, 3.0);
    CHECK(std::abs(dual_gradient(dp, p).lam) <= 2.0 * p.max_d);
  }
}

TEST_CASE("hessian quadratic form and gauge kernel") {
  auto g = lmrate::testing::rng(6);
  const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, 4, 6);
  const DualPoint dp = random_point(g, 4, 6);
  const Matrix hs = dual_hessian(dp, p);
  const Matrix q = materialize(to_coupling(dp), p);
  for (int trial = 0; trial < 20; ++trial) {
    Vector v(11);
    for (int k = 0; k < 11; ++k) v(k) = uniform(g, -1.0, 1.0);
    double direct = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) {
        const double z = v(i) + v(4 + j) + p.d(i, j) * v(10);
        direct += q(i, j) * z * z;
      }
    CHECK(v.dot(hs * v) == doctest::Approx(direct).epsilon(1e-10));
  }
  CHECK((hs * gauge_direction(4, 6)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(numerical_rank(hs) == 10);
  CHECK_THROWS_AS(dual_hessian(dp, p, 10), std::length_error);
}

TEST_CASE("gauge normalisation") {
  auto g = lmrate::testing::rng(7);
  const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, 2, 3);
  const DualPoint dp = random_point(g, 2, 3);
  const DualPoint n1 = gauge_normalize(dp);
  CHECK(std::abs(n1.alpha.sum() - n1.beta.sum()) < 1e-14);
  const DualPoint n2 = gauge_normalize(n1);
  CHECK((n2.alpha - n1.alpha).cwiseAbs().maxCoeff() < 1e-15);
  DualPoint shifted = dp;
  shifted.alpha.array() += 5.0;
  shifted.beta.array() -= 5.0;
  const DualPoint n3 = gauge_normalize(shifted);
  CHECK((n3.alpha - n1.alpha).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((n3.beta - n1.beta).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(std::abs(dual_objective(n1, p) - dual_objective(dp, p)) < 1e-12);
}

TEST_CASE("oracle on the two by two instance") {
  const DiscreteProblem p = two_by_two();
  const SolveReport r = newton_oracle(p);
  REQUIRE(r.status == SolveStatus::Converged);
  CHECK(std::abs(r.lm_rate_nats - brute_force_2x2()) < 1e-6);
  CHECK(r.solution.lam > 0.0);
}

TEST_CASE("oracle optimum: strong duality and stationarity") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  const SolveReport r = newton_oracle(p);
  REQUIRE(r.status == SolveStatus::Converged);
  REQUIRE(r.solution.lam > 0.0);
  const DualPoint dp = to_dual(r.solution);
  CHECK(std::abs(primal_entropy(r.solution, p) + dual_objective(dp, p)) <= 1e-8);
  CHECK(dual_gradient(dp, p).inf_norm() <= 1e-9);
}

TEST_CASE("oracle on an inactive constraint") {
  const DiscreteProblem base = lmrate::testing::qpsk_problem(10);
  const SolveReport r = newton_oracle(with_threshold(base, 1.5 * base.max_d));
  CHECK(r.status == SolveStatus::Converged);
  CHECK(r.solution.lam == 0.0);
  CHECK(std::abs(r.lm_rate_nats) < 1e-9);
}

TEST_CASE("oracle refuses instances above the cap") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  OracleOptions o;
  o.hessian_cap = 50;
  CHECK_THROWS_AS(newton_oracle(p, o), std::length_error);
}

TEST_CASE("scarlett dual") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  CHECK(std::abs(scarlett_dual_value({0.0, Vector::Zero(4)}, p)) < 1e-15);

  const SolveReport r = newton_oracle(p);
  const ScarlettDualPoint sp = scarlett_from_coupling(r.solution, p);
  CHECK(sp.zeta == r.solution.lam);
  CHECK(std::abs(scarlett_dual_value(sp, p) - r.lm_rate_nats) <= 1e-8);

  auto g = lmrate::testing::rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    ScarlettDualPoint q{uniform(g, 0.0, 3.0), Vector(4)};
    for (int i = 0; i < 4; ++i) q.a(i) = uniform(g, -2.0, 2.0);
    CHECK(scarlett_dual_value(q, p) <= r.lm_rate_nats + 1e-8);
  }
}

TEST_CASE("kernel structure") {
  auto g = lmrate::testing::rng(9);
  const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, 4, 5);
  const KernelReport k = kernel_structure(p.d);
  CHECK(k.rank == 9);
  CHECK(k.nullity == 1);
  CHECK(k.gauge_only);
  CHECK_FALSE(k.degenerate);
  CHECK(k.alignment == doctest::Approx(1.0).epsilon(1e-10));

  const KernelReport c = kernel_structure(Matrix::Constant(3, 4, 2.0));
  CHECK(c.rank == 3 + 4 - 1);
  CHECK(c.nullity == 2);
  CHECK(c.degenerate);
  CHECK_FALSE(c.gauge_only);
}

TEST_CASE("certificate on a constant metric") {
  const double dc = 0.7;
  Matrix d = Matrix::Constant(2, 3, dc);
  Matrix w = Matrix::Constant(2, 3, 1.0 / 3.0);
  const DiscreteProblem p = make_problem(d, Vector::Constant(2, 0.5), w, 1.0);
  SolverConfig cfg;
  cfg.lambda_strategy = LambdaStrategy::GradientProjection;
  const SolveReport rep = solve(p, cfg);
  double sup = rep.initial.lambda;
  for (const auto& row : rep.trace) sup = std::max(sup, row.lambda);
  const ConvergenceCertificate c = certificate(rep, p, dual_objective(rep.solution, p));
  CHECK(c.m_lambda == doctest::Approx(sup / 2.0));
  CHECK(c.c_d == doctest::Approx(std::exp(-2.0 * dc * c.m_lambda)).epsilon(1e-14));
  CHECK(c.m_d == dc);
}

TEST_CASE("certificate on a short projection run") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SolverConfig cfg;
  cfg.lambda_strategy = LambdaStrategy::GradientProjection;
  cfg.max_iters = 300;
  const SolveReport rep = solve(p, cfg);
  OracleOptions o;
  o.tol = 1e-12;
  const double g_star = dual_objective(newton_oracle(p, o).solution, p);
  const ConvergenceCertificate c = certificate(rep, p, g_star);
  CHECK(c.errors.size() == rep.trace.size() + 1);
  for (std::size_t k = 1; k < c.errors.size(); ++k) CHECK(c.errors[k] <= c.errors[k - 1] + 1e-12);
  CHECK(c.s0 >= c.m0);
  CHECK(c.spreads_bounded);
  CHECK(c.bound_satisfied);
  CHECK(c.g_star_source == "newton");

  const Json j = to_json(c);
  const std::vector<std::string> keys{"m_d", "delta", "l_lambda", "m_lambda", "m0",
                                      "s0",  "e0",    "bound_satisfied", "worst_margin"};
  for (std::size_t k = 0; k < keys.size(); ++k) CHECK(j.contains(keys[k]));

  CHECK_THROWS_AS(certificate(rep, p, g_star + 1.0), std::runtime_error);
}
