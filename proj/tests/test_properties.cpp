#include <doctest.h>

#include <cmath>

#include "lmrate/dual.hpp"
#include "lmrate/gmi.hpp"
#include "lmrate/sinkhorn.hpp"
#include "support.hpp"

using namespace lmrate;
using lmrate::testing::uniform;

TEST_CASE("hessian is positive semidefinite along random directions") {
  auto g = lmrate::testing::rng(21);
  const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, 6, 6);
  DualPoint dp{Vector(6), Vector(6), 0.8};
  for (int k = 0; k < 6; ++k) {
    dp.alpha(k) = uniform(g, -1.0, 1.0);
    dp.beta(k) = uniform(g, -1.0, 1.0);
  }
  const Matrix h = dual_hessian(dp, p);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector v(13);
    for (int k = 0; k < 13; ++k) v(k) = uniform(g, -1.0, 1.0);
    CHECK(v.dot(h * v) >= -1e-12);
  }
}

TEST_CASE("kernel is the gauge direction for random symmetric metrics") {
  auto g = lmrate::testing::rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 * static_cast<int>(uniform(g, 1.0, 4.0));  // 2, 4 or 6
    const int n = static_cast<int>(uniform(g, 2.0, 7.0));      // 2 .. 6
    const DiscreteProblem p = lmrate::testing::random_symmetric_problem(g, m, n);
    const KernelReport k = kernel_structure(p.d);
    CAPTURE(m);
    CAPTURE(n);
    CHECK(k.nullity == 1);
    CHECK(k.rank == m + n);
    CHECK(k.gauge_only);
  }
}

TEST_CASE("newton from random starts finds one multiplier") {
  auto g = lmrate::testing::rng(23);
  const DiscreteProblem p = lmrate::testing::qpsk_problem(8);
  std::vector<double> lams;
  for (int trial = 0; trial < 10; ++trial) {
    DualPoint start{Vector(p.m()), Vector(p.n()), 0.0};
    for (std::size_t i = 0; i < p.m(); ++i) start.alpha(i) = uniform(g, -1.0, 1.0);
    for (std::size_t j = 0; j < p.n(); ++j) start.beta(j) = uniform(g, -1.0, 1.0) - p.log_p_y(j);
    OracleOptions o;
    o.start = gauge_normalize(start);
    const SolveReport r = newton_oracle(p, o);
    REQUIRE(r.status == SolveStatus::Converged);
    lams.push_back(r.solution.lam);
  }
  const auto [lo, hi] = std::minmax_element(lams.begin(), lams.end());
  CHECK(*hi - *lo <= 1e-9);
}

TEST_CASE("gauge moves leave the coupling and residuals alone") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SinkhornState s = initial_state(p);
  for (int k = 0; k < 5; ++k) s = update_lambda_rootfind(sinkhorn_step(s, p), p);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    SinkhornState t = s;
    t.q.log_phi.array() += std::log(c);
    t.q.log_psi.array() -= std::log(c);
    const Residuals a = residuals(s, p), b = residuals(t, p);
    CHECK(std::abs(a.r_phi - b.r_phi) <= 1e-12);
    CHECK(std::abs(a.r_psi - b.r_psi) <= 1e-12);
    CHECK(std::abs(a.r_lambda - b.r_lambda) <= 1e-12);
    CHECK(std::abs(lm_rate(s.q, p) - lm_rate(t.q, p)) <= 1e-12);
    CHECK((materialize(s.q, p) - materialize(t.q, p)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("dual objective never increases along a run") {
  for (auto strategy : {LambdaStrategy::RootFind, LambdaStrategy::GradientProjection}) {
    for (double snr : {-5.0, 5.0}) {
      const DiscreteProblem p = lmrate::testing::qpsk_problem(10, snr);
      SolverConfig cfg;
      cfg.lambda_strategy = strategy;
      cfg.max_iters = 300;
      const SolveReport r = solve(p, cfg);
      double prev = r.initial.dual_objective;
      for (const TraceRow& row : r.trace) {
        CHECK(row.dual_objective <= prev + 1e-12);
        prev = row.dual_objective;
      }
    }
  }
}

TEST_CASE("both multiplier strategies reach the same rate") {
  for (double snr : {-5.0, 0.0, 5.0}) {
    const DiscreteProblem p = lmrate::testing::qpsk_problem(20, snr);
    SolverConfig a, b;
    a.lambda_strategy = LambdaStrategy::RootFind;
    a.max_iters = 5000;
    b.lambda_strategy = LambdaStrategy::GradientProjection;
    b.tau = curvature_step_size(p);
    b.max_iters = 20000;
    const SolveReport ra = solve(p, a), rb = solve(p, b);
    REQUIRE(ra.status == SolveStatus::Converged);
    REQUIRE(rb.status == SolveStatus::Converged);
    CHECK(std::abs(ra.lm_rate_nats - rb.lm_rate_nats) <= 1e-8);
  }
}

TEST_CASE("multiplier stays bounded on converged runs") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10, 10.0);
  const SolveReport r = solve(p, {});
  double sup = r.initial.lambda;
  for (const TraceRow& row : r.trace) sup = std::max(sup, row.lambda);
  CHECK(std::isfinite(sup));
  CHECK(sup < 1e6);
}

TEST_CASE("gmi objective is concave") {
  auto g = lmrate::testing::rng(24);
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    double s[3] = {uniform(g, 0.0, 5.0), uniform(g, 0.0, 5.0), uniform(g, 0.0, 5.0)};
    std::sort(s, s + 3);
    const double f1 = gmi_objective(p, s[0]), f2 = gmi_objective(p, s[1]), f3 = gmi_objective(p, s[2]);
    const double chord = s[2] > s[0] ? f1 + (f3 - f1) * (s[1] - s[0]) / (s[2] - s[0]) : f2;
    CHECK(f2 >= chord - 1e-10);
  }
}

TEST_CASE("scaling the metric rescales the gmi maximiser") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10, 3.0);
  const GmiResult base = gmi(p);
  for (double c : {0.25, 3.0}) {
    DiscreteProblem q = p;
    q.d *= c;
    q.t *= c;
    q.max_d *= c;
    const GmiResult r = gmi(q);
    CHECK(std::abs(r.value_nats - base.value_nats) <= 1e-8);
    CHECK(std::abs(r.s_star - base.s_star / c) <= 1e-8);
  }
}
