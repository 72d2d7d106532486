#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numbers>

#include "lmrate/channel.hpp"
#include "lmrate/constellation.hpp"
#include "lmrate/dual.hpp"
#include "lmrate/gmi.hpp"
#include "lmrate/serialize.hpp"
#include "lmrate/sinkhorn.hpp"

namespace py = pybind11;
using namespace lmrate;

namespace {

Scheme scheme_or_throw(const std::string& name) {
  auto s = parse_scheme(name);
  if (!s) throw py::value_error("unknown modulation '" + name + "'");
  return *s;
}

LambdaStrategy strategy_or_throw(const std::string& name) {
  if (name == "root") return LambdaStrategy::RootFind;
  if (name == "project") return LambdaStrategy::GradientProjection;
  throw py::value_error("lambda_strategy must be 'root' or 'project'");
}

py::dict trace_arrays(const std::vector<TraceRow>& trace) {
  const auto n = static_cast<Eigen::Index>(trace.size());
  Vector r_phi(n), r_psi(n), r_lambda(n), dual(n), lm(n), lam(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const TraceRow& row = trace[static_cast<std::size_t>(k)];
    r_phi[k] = row.r_phi;
    r_psi[k] = row.r_psi;
    r_lambda[k] = row.r_lambda;
    dual[k] = row.dual_objective;
    lm[k] = row.lm_rate_nats;
    lam[k] = row.lambda;
  }
  py::dict d;
  d["r_phi"] = r_phi;
  d["r_psi"] = r_psi;
  d["r_lambda"] = r_lambda;
  d["dual_objective"] = dual;
  d["lm_rate_nats"] = lm;
  d["lambda"] = lam;
  return d;
}

py::dict report_dict(const SolveReport& r, const DiscreteProblem& p) {
  py::dict d;
  d["lm_rate_nats"] = r.lm_rate_nats;
  d["lm_rate_bits"] = nats_to_bits(r.lm_rate_nats);
  d["lambda"] = r.lambda_final;
  d["iterations"] = r.iterations;
  d["status"] = std::string(to_string(r.status));
  d["strategy"] = std::string(to_string(r.strategy));
  d["refine_start"] = r.refine_start;
  d["message"] = r.message;
  d["runtime_ms"] = r.runtime_ms;
  d["phi"] = r.solution.phi();
  d["psi"] = r.solution.psi();
  d["dual_objective"] = dual_objective(r.solution, p);
  d["primal_entropy"] = primal_entropy(r.solution, p);
  d["trace"] = trace_arrays(r.trace);
  return d;
}

}  // namespace

PYBIND11_MODULE(_lmrate, m) {
  m.doc() = "LM rate of constellation-input channels under a mismatched decoding metric.";

  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<DiscreteProblem>(m, "Problem")
      .def_readonly("d", &DiscreteProblem::d)
      .def_readonly("p_x", &DiscreteProblem::p_x)
      .def_readonly("p_y", &DiscreteProblem::p_y)
      .def_readonly("w", &DiscreteProblem::w)
      .def_readonly("t", &DiscreteProblem::t)
      .def_property_readonly("m", &DiscreteProblem::m)
      .def_property_readonly("n", &DiscreteProblem::n)
      .def("with_threshold", [](const DiscreteProblem& p, double t) { return with_threshold(p, t); })
      .def("to_json", [](const DiscreteProblem& p) { return to_json(p).dump(); })
      .def("__repr__", [](const DiscreteProblem& p) {
        return "<Problem m=" + std::to_string(p.m()) + " n=" + std::to_string(p.n()) + ">";
      });

  m.def(
      "make_problem",
      [](const Matrix& d, const Vector& p_x, const Matrix& w, std::optional<double> threshold) {
        return make_problem(d, p_x, w, threshold);
      },
      py::arg("d"), py::arg("p_x"), py::arg("w"), py::arg("threshold") = py::none());

  m.def(
      "constellation",
      [](const std::string& name) {
        const Constellation c = build_constellation(scheme_or_throw(name));
        Matrix pts(static_cast<Eigen::Index>(c.size()), 2);
        for (std::size_t i = 0; i < c.size(); ++i) {
          pts(static_cast<Eigen::Index>(i), 0) = c.points[i][0];
          pts(static_cast<Eigen::Index>(i), 1) = c.points[i][1];
        }
        return py::make_tuple(pts, Vector::Map(c.probs.data(), static_cast<Eigen::Index>(c.size())).eval());
      },
      py::arg("modulation"), "Points as an (M, 2) array and their probabilities.");

  m.def(
      "awgn_problem",
      [](const std::string& modulation, double eta, double theta, double snr_db, int grid,
         double half_width, double prob_floor) {
        const ChannelSpec ch = build_channel(1.0, eta, theta, snr_db);
        return discretize(ch, build_constellation(scheme_or_throw(modulation)),
                          DiscretizeOptions{grid, prob_floor, half_width})
            .problem;
      },
      py::arg("modulation") = "qpsk", py::arg("eta") = 0.9, py::arg("theta") = std::numbers::pi / 18.0,
      py::arg("snr_db") = 0.0, py::arg("grid") = 50, py::arg("half_width") = 8.0,
      py::arg("prob_floor") = 1e-100);

  m.def(
      "solve",
      [](const DiscreteProblem& p, int max_iters, double tol, std::optional<std::string> strategy,
         std::optional<double> tau, bool refine) {
        SolverConfig cfg;
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        if (strategy) cfg.lambda_strategy = strategy_or_throw(*strategy);
        cfg.tau = tau;
        cfg.refine = refine;
        SolveReport r;
        {
          py::gil_scoped_release nogil;
          r = solve(p, cfg);
        }
        return report_dict(r, p);
      },
      py::arg("problem"), py::arg("max_iters") = 500, py::arg("tol") = 1e-10,
      py::arg("lambda_strategy") = py::none(), py::arg("tau") = py::none(),
      py::arg("refine") = false);

  m.def(
      "newton_oracle",
      [](const DiscreteProblem& p, double tol, int max_iters) {
        OracleOptions o;
        o.tol = tol;
        o.max_iters = max_iters;
        SolveReport r;
        {
          py::gil_scoped_release nogil;
          r = newton_oracle(p, o);
        }
        return report_dict(r, p);
      },
      py::arg("problem"), py::arg("tol") = 1e-12, py::arg("max_iters") = 500);

  m.def(
      "gmi",
      [](const DiscreteProblem& p) {
        const GmiResult g = gmi(p);
        py::dict d;
        d["value_nats"] = g.value_nats;
        d["value_bits"] = nats_to_bits(g.value_nats);
        d["s_star"] = g.s_star;
        d["evaluations"] = g.evaluations;
        return d;
      },
      py::arg("problem"));

  m.def("gmi_objective", &gmi_objective, py::arg("problem"), py::arg("s"));

  m.def(
      "dual_objective",
      [](const DiscreteProblem& p, const Vector& alpha, const Vector& beta, double lam) {
        return dual_objective(DualPoint{alpha, beta, lam}, p);
      },
      py::arg("problem"), py::arg("alpha"), py::arg("beta"), py::arg("lam"));

  m.def(
      "dual_gradient",
      [](const DiscreteProblem& p, const Vector& alpha, const Vector& beta, double lam) {
        return dual_gradient(DualPoint{alpha, beta, lam}, p).stacked();
      },
      py::arg("problem"), py::arg("alpha"), py::arg("beta"), py::arg("lam"),
      "Gradient stacked as (alpha, beta, lambda).");

  m.def(
      "kernel_structure",
      [](const Matrix& d, double rel_tol) {
        const KernelReport k = kernel_structure(d, rel_tol);
        py::dict out;
        out["rank"] = k.rank;
        out["nullity"] = k.nullity;
        out["gauge_only"] = k.gauge_only;
        out["degenerate"] = k.degenerate;
        out["alignment"] = k.alignment;
        return out;
      },
      py::arg("d"), py::arg("rel_tol") = 1e-10);
}
