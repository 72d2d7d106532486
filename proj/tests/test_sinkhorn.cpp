#include <doctest.h>

#include <cmath>

#include "lmrate/dual.hpp"
#include "lmrate/sinkhorn.hpp"
#include "support.hpp"

using namespace lmrate;

namespace {

// F evaluated straight from the definition in long double.
long double reference_f(const SinkhornState& s, const DiscreteProblem& p, long double lam) {
  const Vector phi = s.phi(), psi = s.psi();
  long double sum = 0.0L;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (std::size_t j = 0; j < p.n(); ++j) {
      const long double d = p.d(i, j);
      sum += static_cast<long double>(phi(i)) * psi(j) * d * std::exp(-lam * d);
    }
  return sum - p.t;
}

// Nested grid scans: each level samples 200 points over the current sign
// change bracket.
double scan_root(const SinkhornState& s, const DiscreteProblem& p, double hi) {
  long double lo = 0.0L, up = hi;
  for (int level = 0; level < 12 && up - lo > 1e-14L; ++level) {
    const int k = 200;
    const long double h = (up - lo) / k;
    long double prev = lo;
    for (int t = 1; t <= k; ++t) {
      const long double x = lo + t * h;
      if (reference_f(s, p, x) <= 0.0L) {
        lo = prev;
        up = x;
        break;
      }
      prev = x;
    }
  }
  return static_cast<double>(0.5L * (lo + up));
}

DiscreteProblem one_by_one(double d, double t) {
  Matrix dm(1, 1), w(1, 1);
  dm << d;
  w << 1.0;
  return make_problem(dm, Vector::Ones(1), w, t);
}

}  // namespace

TEST_CASE("config validation names the field") {
  SolverConfig c;
  c.tol = 0.0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("tol"), std::invalid_argument);
  c = {};
  c.max_iters = 0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("max_iters"), std::invalid_argument);
  c = {};
  c.tau = -1.0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("tau"), std::invalid_argument);
}

TEST_CASE("default strategy and step size") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  CHECK(resolve_strategy({}, p) == LambdaStrategy::RootFind);
  DiscreteProblem asym = p;
  asym.x_neg.clear();
  CHECK(resolve_strategy({}, asym) == LambdaStrategy::GradientProjection);
  CHECK(default_step_size(p) == doctest::Approx(1.0 / (p.max_d * p.max_d)));
  CHECK(curvature_step_size(p) > default_step_size(p));
}

TEST_CASE("uniform two by two with constant metric") {
  const double c = 0.8;
  Matrix d = Matrix::Constant(2, 2, c);
  Matrix w(2, 2);
  w << 0.5, 0.5, 0.5, 0.5;
  const DiscreteProblem p = make_problem(d, Vector::Constant(2, 0.5), w);
  const SinkhornState s1 = sinkhorn_step(initial_state(p), p);
  // phi = (1/2) / (2 e^{-c}), then psi = (1/2) / (2 e^{-c} phi) = 1.
  for (int i = 0; i < 2; ++i) {
    CHECK(s1.phi()(i) == doctest::Approx(std::exp(c) / 4.0).epsilon(1e-15));
    CHECK(s1.psi()(i) == doctest::Approx(1.0).epsilon(1e-15));
  }
  const SinkhornState s2 = sinkhorn_step(s1, p);
  CHECK((s2.q.log_phi - s1.q.log_phi).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((s2.q.log_psi - s1.q.log_psi).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("column residual vanishes after a step") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SinkhornState s = initial_state(p);
  for (int k = 0; k < 3; ++k) {
    s = sinkhorn_step(s, p);
    CHECK(residuals(s, p).r_psi < 1e-15);
  }
}

TEST_CASE("fixed points reproduce themselves") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SolverConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iters = 2000;
  cfg.refine = true;
  const SolveReport rep = solve(p, cfg);
  REQUIRE(rep.status == SolveStatus::Converged);
  SinkhornState s{rep.solution, 0, {}};
  const SinkhornState t = sinkhorn_step(s, p);
  CHECK((t.q.log_phi - s.q.log_phi).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((t.q.log_psi - s.q.log_psi).cwiseAbs().maxCoeff() < 1e-10);
  const Residuals r = residuals(s, p);
  CHECK(r.max() <= 1e-12);
}

TEST_CASE("projection update") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SinkhornState s = sinkhorn_step(initial_state(p), p);
  const double f = multiplier_function(s, p, s.lam());
  const SinkhornState u = update_lambda_projection(s, p, 0.01);
  CHECK(u.lam() == doctest::Approx(std::max(0.0, s.lam() + 0.01 * f)));

  // A slack constraint pushes lambda down and pins it at zero.
  const DiscreteProblem slack = with_threshold(p, 2.0 * p.max_d);
  SinkhornState z = sinkhorn_step(initial_state(slack), slack);
  REQUIRE(multiplier_function(z, slack, z.lam()) < 0.0);
  const SinkhornState z1 = update_lambda_projection(z, slack, 1e-3);
  CHECK(z1.lam() < z.lam());
  const SinkhornState z0{product_coupling(slack), 0, {}};
  REQUIRE(multiplier_function(z0, slack, 0.0) < 0.0);
  CHECK(update_lambda_projection(z0, slack, 1.0).lam() == 0.0);

  // F = 0 leaves lambda alone.
  const DiscreteProblem p1 = one_by_one(1.0, std::exp(-1.0));
  SinkhornState s1 = initial_state(p1, 1.0);
  CHECK(update_lambda_projection(s1, p1, 0.5).lam() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("closed form root on a one by one instance") {
  const DiscreteProblem p = one_by_one(1.0, std::exp(-1.0));
  for (double start : {0.0, 0.3, 5.0}) {
    const SinkhornState s = update_lambda_rootfind(initial_state(p, start), p);
    CHECK(s.lam() == doctest::Approx(1.0).epsilon(1e-13));
  }
  const DiscreteProblem slack = one_by_one(1.0, 2.0);
  CHECK(update_lambda_rootfind(initial_state(slack), slack).lam() == 0.0);
}

TEST_CASE("root finder agrees with a grid scan") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SinkhornState s = initial_state(p);
  for (int k = 0; k < 4; ++k) s = update_lambda_rootfind(sinkhorn_step(s, p), p);
  s = sinkhorn_step(s, p);
  REQUIRE(multiplier_function(s, p, 0.0) > 0.0);
  const double root = update_lambda_rootfind(s, p).lam();
  const double scanned = scan_root(s, p, 50.0);
  CHECK(std::abs(root - scanned) <= 1e-10);
  CHECK(std::abs(multiplier_function(s, p, root)) <= 1e-12 * p.t);
}

TEST_CASE("root finder gives up past the bracket cap") {
  // F(lam) = 1e-6 e^{-1e-6 lam} - 1e-20 crosses zero near lam = 3.2e7.
  const DiscreteProblem p = one_by_one(1e-6, 1e-20);
  CHECK_THROWS_AS(update_lambda_rootfind(initial_state(p), p), NumericalError);
}

TEST_CASE("inactive constraint gives the product coupling") {
  const DiscreteProblem base = lmrate::testing::qpsk_problem(10);
  const DiscreteProblem p = with_threshold(base, base.max_d * 1.5);
  for (auto strategy : {LambdaStrategy::RootFind, LambdaStrategy::GradientProjection}) {
    SolverConfig cfg;
    cfg.lambda_strategy = strategy;
    const SolveReport r = solve(p, cfg);
    CHECK(r.status == SolveStatus::Converged);
    CHECK(r.lambda_final == 0.0);
    CHECK(std::abs(r.lm_rate_nats) < 1e-9);
    CHECK(r.final_residuals().r_lambda == 0.0);
  }
}

TEST_CASE("solver matches the newton oracle on a small grid") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  const SolveReport s = solve(p);
  const SolveReport o = newton_oracle(p);
  REQUIRE(s.status == SolveStatus::Converged);
  REQUIRE(o.status == SolveStatus::Converged);
  CHECK(nats_to_bits(std::abs(s.lm_rate_nats - o.lm_rate_nats)) <= 1e-5);
  CHECK(s.trace.size() == static_cast<std::size_t>(s.iterations));
  CHECK(s.final_residuals().max() <= 1e-10);
  CHECK(s.refine_start == -1);
}

TEST_CASE("log domain steps match plain ones") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(12, 5.0);
  SolverConfig plain;
  plain.max_iters = 2000;
  SolverConfig logd = plain;
  logd.force_log_domain = true;
  const SolveReport a = solve(p, plain);
  const SolveReport b = solve(p, logd);
  REQUIRE(a.status == SolveStatus::Converged);
  REQUIRE(b.status == SolveStatus::Converged);
  CHECK(std::abs(a.lm_rate_nats - b.lm_rate_nats) < 1e-10);
  CHECK(std::abs(a.lambda_final - b.lambda_final) < 1e-8);
}

TEST_CASE("out of range scalings without the log domain fallback") {
  const DiscreteProblem base = lmrate::testing::qpsk_problem(10, 20.0);
  SolverConfig cfg;
  cfg.log_domain = false;
  cfg.lambda_init = 500.0;
  cfg.max_iters = 5;
  const SolveReport r = solve(base, cfg);
  CHECK(r.status == SolveStatus::NumericalFailure);
  CHECK(r.failure_iter >= 1);
  CHECK_FALSE(r.message.empty());

  cfg.log_domain = true;
  const SolveReport ok = solve(base, cfg);
  CHECK(ok.status != SolveStatus::NumericalFailure);
}

TEST_CASE("max iters status and refinement") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(10);
  SolverConfig cfg;
  cfg.max_iters = 3;
  const SolveReport r = solve(p, cfg);
  CHECK(r.status == SolveStatus::MaxIters);
  CHECK(r.iterations == 3);
  cfg.refine = true;
  const SolveReport rr = solve(p, cfg);
  CHECK(rr.status == SolveStatus::Converged);
  CHECK(rr.refine_start == 3);
  CHECK(rr.trace.size() == static_cast<std::size_t>(rr.iterations));
  CHECK(rr.final_residuals().max() <= 1e-10);
  CHECK(std::abs(rr.lm_rate_nats - newton_oracle(p).lm_rate_nats) < 1e-9);
}

TEST_CASE("trace rows carry the dual objective and rate") {
  const DiscreteProblem p = lmrate::testing::qpsk_problem(8);
  const SolveReport r = solve(p);
  REQUIRE(!r.trace.empty());
  const TraceRow& last = r.trace.back();
  CHECK(last.lm_rate_nats == doctest::Approx(lm_rate(r.solution, p)).epsilon(1e-12));
  CHECK(last.dual_objective == doctest::Approx(dual_objective(r.solution, p)).epsilon(1e-12));
  CHECK(last.lambda == r.lambda_final);
  CHECK(r.initial.iter == 0);
  CHECK(r.trace.front().iter == 1);
}
