#include "lmrate/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace lmrate {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const Constellation& c) {
  Json pts = Json::array();
  for (const Point2& x : c.points) pts.push_back({x[0], x[1]});
  return Json{{"points", pts}, {"probs", c.probs}};
}

Constellation constellation_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("constellation: expected an object");
  if (!j.contains("points") || !j["points"].is_array())
    throw std::invalid_argument("constellation.points: expected an array");
  if (!j.contains("probs") || !j["probs"].is_array())
    throw std::invalid_argument("constellation.probs: expected an array");
  Constellation c;
  const Json& pts = j["points"];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Json& e = pts[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw std::invalid_argument("constellation.points[" + std::to_string(i) +
                                  "]: expected [re, im]");
    c.points.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  const Json& probs = j["probs"];
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!probs[i].is_number())
      throw std::invalid_argument("constellation.probs[" + std::to_string(i) + "]: expected a number");
    c.probs.push_back(probs[i].get<double>());
  }
  return c;
}

namespace {

Json matrix_rows(const Matrix& a) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace

Json to_json(const DiscreteProblem& p) {
  return Json{{"m", p.m()},
              {"n", p.n()},
              {"t", p.t},
              {"threshold_overridden", p.threshold_overridden},
              {"p_x", vector_json(p.p_x)},
              {"p_y", vector_json(p.p_y)},
              {"x_neg", p.x_neg},
              {"y_neg", p.y_neg},
              {"d", matrix_rows(p.d)},
              {"w", matrix_rows(p.w)}};
}

Json to_json(const ConvergenceCertificate& c) {
  return Json{{"m_d", json_number(c.m_d)},
              {"delta", json_number(c.delta)},
              {"l_lambda", json_number(c.l_lambda)},
              {"m_lambda", json_number(c.m_lambda)},
              {"m0", json_number(c.m0)},
              {"s0", json_number(c.s0)},
              {"e0", json_number(c.e0)},
              {"bound_satisfied", c.bound_satisfied},
              {"worst_margin", json_number(c.worst_margin)},
              {"worst_iter", c.worst_iter},
              {"c_d", json_number(c.c_d)},
              {"tau", json_number(c.tau)},
              {"g_star", json_number(c.g_star)},
              {"g_star_source", c.g_star_source},
              {"max_spread", json_number(c.max_spread)},
              {"spreads_bounded", c.spreads_bounded}};
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace,
                     const std::string& config_echo) {
  if (!config_echo.empty()) os << "# config=" << config_echo << '\n';
  os << "iter,r_phi,r_psi,r_lambda,dual_objective,lm_rate_nats,lambda\n";
  for (const TraceRow& r : trace) {
    os << r.iter << ',' << format_double(r.r_phi) << ',' << format_double(r.r_psi) << ','
       << format_double(r.r_lambda) << ',' << format_double(r.dual_objective) << ','
       << format_double(r.lm_rate_nats) << ',' << format_double(r.lambda) << '\n';
  }
}

}  // namespace lmrate
