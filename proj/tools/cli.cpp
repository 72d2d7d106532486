#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <thread>
#include <tuple>

#include <CLI11.hpp>

#include "lmrate/constellation.hpp"
#include "lmrate/dual.hpp"
#include "lmrate/gmi.hpp"

namespace lmrate::cli {

namespace {

constexpr double kDefaultTheta = std::numbers::pi / 18.0;

std::string indexed(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

double to_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

std::vector<double> number_list(const Json& v, const std::string& path) {
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(to_number(v[i], indexed(path, i)));
  } else {
    out.push_back(to_number(v, path));
  }
  return out;
}

double angle_value(const Json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    if (auto a = parse_angle(v.get<std::string>())) return *a;
    throw ConfigError(path, "cannot parse angle '" + v.get<std::string>() + "'");
  }
  throw ConfigError(path, "expected a number or an angle string such as \"pi/18\"");
}

int to_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<int>();
}

bool to_bool(const Json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

std::optional<LambdaStrategy> parse_strategy(std::string_view s) {
  if (s == "project") return LambdaStrategy::GradientProjection;
  if (s == "root") return LambdaStrategy::RootFind;
  return std::nullopt;
}

void check_finite(double v, const std::string& path) {
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
}

template <class T>
void check_list(const std::vector<T>& v, const std::string& path, bool single) {
  if (v.empty()) throw ConfigError(path, "must not be empty");
  if (single && v.size() != 1)
    throw ConfigError(path, "this command takes a single value (got " + std::to_string(v.size()) + ")");
}

double rate_out(double nats, const RunConfig& cfg) { return cfg.nats ? nats : nats_to_bits(nats); }

std::string rate_suffix(const RunConfig& cfg) { return cfg.nats ? "nats" : "bits"; }

void emit(const RunConfig& cfg, std::ostream& out, const std::string& content) {
  if (cfg.out.empty()) {
    out << content;
    return;
  }
  const std::string tmp = cfg.out + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("out", "cannot open '" + cfg.out + "' for writing");
    f << content;
    if (!f) throw ConfigError("out", "failed writing '" + cfg.out + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, cfg.out, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ConfigError("out", "cannot move output into place at '" + cfg.out + "'");
  }
}

std::string csv_value(double v, bool present = true) { return present ? format_double(v) : "-"; }

Discretization instance_or_config_error(const Cell& cell, const RunConfig& cfg) {
  try {
    return build_instance(cell, cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("instance", e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError("grid", e.what());
  }
}

Json cell_json(const Cell& c) {
  return Json{{"modulation", c.modulation}, {"eta", c.eta}, {"theta", c.theta}, {"snr_db", c.snr_db}};
}

}  // namespace

int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return kOk;
    case SolveStatus::MaxIters: return kMaxIters;
    case SolveStatus::NumericalFailure: return kNumericalFailure;
  }
  return kNumericalFailure;
}

std::optional<double> parse_angle(std::string_view text) {
  const std::string s(text);
  static const std::regex plain(R"(^\s*[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*$)");
  static const std::regex with_pi(
      R"(^\s*([+-])?\s*(?:(\d+\.?\d*|\.\d+)\s*\*?\s*)?pi\s*(?:/\s*(\d+\.?\d*|\.\d+))?\s*$)",
      std::regex::icase);
  std::smatch m;
  if (std::regex_match(s, plain)) return std::stod(s);
  if (std::regex_match(s, m, with_pi)) {
    double v = std::numbers::pi;
    if (m[2].matched) v *= std::stod(m[2].str());
    if (m[3].matched) {
      const double den = std::stod(m[3].str());
      if (den == 0.0) return std::nullopt;
      v /= den;
    }
    if (m[1].matched && m[1].str() == "-") v = -v;
    return v;
  }
  return std::nullopt;
}

RunConfig config_from_json(const Json& j, RunConfig cfg) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = it.key();
    std::replace(key.begin(), key.end(), '-', '_');
    const Json& v = it.value();
    const std::string path = "config." + key;
    if (key == "modulation") {
      cfg.modulation.clear();
      if (v.is_string()) {
        cfg.modulation.push_back(v.get<std::string>());
      } else if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!v[i].is_string()) throw ConfigError(indexed(path, i), "expected a string");
          cfg.modulation.push_back(v[i].get<std::string>());
        }
      } else {
        throw ConfigError(path, "expected a string or a list of strings");
      }
    } else if (key == "eta") {
      cfg.eta = number_list(v, path);
    } else if (key == "theta") {
      cfg.theta.clear();
      if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) cfg.theta.push_back(angle_value(v[i], indexed(path, i)));
      } else {
        cfg.theta.push_back(angle_value(v, path));
      }
    } else if (key == "snr_db") {
      cfg.snr_db = number_list(v, path);
    } else if (key == "grid") {
      cfg.grid.clear();
      if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) cfg.grid.push_back(to_int(v[i], indexed(path, i)));
      } else {
        cfg.grid.push_back(to_int(v, path));
      }
    } else if (key == "half_width") {
      cfg.half_width = to_number(v, path);
    } else if (key == "prob_floor") {
      cfg.prob_floor = to_number(v, path);
    } else if (key == "threshold") {
      cfg.threshold = v.is_null() ? std::nullopt : std::optional<double>(to_number(v, path));
    } else if (key == "max_iters") {
      cfg.max_iters = to_int(v, path);
    } else if (key == "tol") {
      cfg.tol = to_number(v, path);
    } else if (key == "lambda_strategy") {
      if (v.is_null()) {
        cfg.lambda_strategy.reset();
      } else {
        if (!v.is_string()) throw ConfigError(path, "expected \"project\" or \"root\"");
        cfg.lambda_strategy = parse_strategy(v.get<std::string>());
        if (!cfg.lambda_strategy) throw ConfigError(path, "expected \"project\" or \"root\"");
      }
    } else if (key == "tau") {
      cfg.tau = v.is_null() ? std::nullopt : std::optional<double>(to_number(v, path));
    } else if (key == "refine") {
      cfg.refine = to_bool(v, path);
    } else if (key == "trials") {
      cfg.trials = to_int(v, path);
    } else if (key == "workers") {
      cfg.workers = to_int(v, path);
    } else if (key == "hessian_cap") {
      cfg.hessian_cap = static_cast<std::size_t>(std::max(0, to_int(v, path)));
    } else if (key == "with_gmi") {
      cfg.with_gmi = to_bool(v, path);
    } else if (key == "nats") {
      cfg.nats = to_bool(v, path);
    } else if (key == "out") {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      cfg.out = v.get<std::string>();
    } else {
      throw ConfigError(path, "unknown field");
    }
  }
  return cfg;
}

Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["modulation"] = cfg.modulation;
  j["eta"] = cfg.eta;
  j["theta"] = cfg.theta.empty() ? std::vector<double>{kDefaultTheta} : cfg.theta;
  j["snr_db"] = cfg.snr_db;
  j["grid"] = cfg.grid;
  j["half_width"] = cfg.half_width;
  j["prob_floor"] = cfg.prob_floor;
  j["threshold"] = cfg.threshold ? Json(*cfg.threshold) : Json(nullptr);
  j["max_iters"] = cfg.max_iters;
  j["tol"] = cfg.tol;
  j["lambda_strategy"] =
      cfg.lambda_strategy ? Json(std::string(to_string(*cfg.lambda_strategy))) : Json(nullptr);
  j["tau"] = cfg.tau ? Json(*cfg.tau) : Json(nullptr);
  j["refine"] = cfg.refine;
  j["trials"] = cfg.trials;
  j["workers"] = cfg.workers;
  j["hessian_cap"] = cfg.hessian_cap;
  j["with_gmi"] = cfg.with_gmi;
  j["nats"] = cfg.nats;
  return j;
}

void validate(const RunConfig& cfg, bool single_cell) {
  check_list(cfg.modulation, "modulation", single_cell);
  for (std::size_t i = 0; i < cfg.modulation.size(); ++i)
    if (!parse_scheme(cfg.modulation[i]))
      throw ConfigError(indexed("modulation", i), "unknown scheme '" + cfg.modulation[i] + "'");
  check_list(cfg.eta, "eta", single_cell);
  for (std::size_t i = 0; i < cfg.eta.size(); ++i) {
    check_finite(cfg.eta[i], indexed("eta", i));
    if (!(cfg.eta[i] > 0.0)) throw ConfigError(indexed("eta", i), "must be positive");
  }
  if (!cfg.theta.empty()) check_list(cfg.theta, "theta", single_cell);
  for (std::size_t i = 0; i < cfg.theta.size(); ++i) check_finite(cfg.theta[i], indexed("theta", i));
  check_list(cfg.snr_db, "snr_db", single_cell);
  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) check_finite(cfg.snr_db[i], indexed("snr_db", i));
  check_list(cfg.grid, "grid", single_cell);
  for (std::size_t i = 0; i < cfg.grid.size(); ++i)
    if (cfg.grid[i] < 2) throw ConfigError(indexed("grid", i), "must be at least 2");

  check_finite(cfg.half_width, "half_width");
  if (!(cfg.half_width > 0.0)) throw ConfigError("half_width", "must be positive");
  check_finite(cfg.prob_floor, "prob_floor");
  if (!(cfg.prob_floor >= 0.0 && cfg.prob_floor < 1.0))
    throw ConfigError("prob_floor", "must lie in [0, 1)");
  if (cfg.threshold) {
    check_finite(*cfg.threshold, "threshold");
    if (!(*cfg.threshold > 0.0)) throw ConfigError("threshold", "must be positive");
  }
  if (cfg.max_iters < 1) throw ConfigError("max_iters", "must be at least 1");
  check_finite(cfg.tol, "tol");
  if (!(cfg.tol > 0.0)) throw ConfigError("tol", "must be positive");
  if (cfg.tau) {
    check_finite(*cfg.tau, "tau");
    if (!(*cfg.tau > 0.0)) throw ConfigError("tau", "must be positive");
  }
  if (cfg.trials < 1) throw ConfigError("trials", "must be at least 1");
  if (cfg.workers < 1) throw ConfigError("workers", "must be at least 1");
  if (cfg.hessian_cap < 1) throw ConfigError("hessian_cap", "must be at least 1");
}

SolverConfig solver_config(const RunConfig& cfg) {
  SolverConfig s;
  s.max_iters = cfg.max_iters;
  s.tol = cfg.tol;
  s.lambda_strategy = cfg.lambda_strategy;
  s.tau = cfg.tau;
  s.refine = cfg.refine;
  return s;
}

std::vector<Cell> cells(const RunConfig& cfg) {
  const std::vector<double> thetas = cfg.theta.empty() ? std::vector<double>{kDefaultTheta} : cfg.theta;
  std::vector<Cell> out;
  for (const auto& m : cfg.modulation)
    for (double e : cfg.eta)
      for (double t : thetas)
        for (double s : cfg.snr_db)
          for (int g : cfg.grid) out.push_back(Cell{m, e, t, s, g});
  std::sort(out.begin(), out.end(), [](const Cell& a, const Cell& b) {
    return std::tie(a.modulation, a.eta, a.theta, a.snr_db, a.grid) <
           std::tie(b.modulation, b.eta, b.theta, b.snr_db, b.grid);
  });
  return out;
}

Discretization build_instance(const Cell& cell, const RunConfig& cfg) {
  const auto scheme = parse_scheme(cell.modulation);
  if (!scheme) throw std::invalid_argument("unknown scheme '" + cell.modulation + "'");
  const ChannelSpec ch = build_channel(1.0, cell.eta, cell.theta, cell.snr_db);
  Discretization d = discretize(ch, build_constellation(*scheme),
                                DiscretizeOptions{cell.grid, cfg.prob_floor, cfg.half_width});
  if (cfg.threshold) d.problem = with_threshold(std::move(d.problem), *cfg.threshold);
  return d;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, true);
  const Cell cell = cells(cfg).front();
  const Discretization inst = instance_or_config_error(cell, cfg);
  const SolveReport rep = solve(inst.problem, solver_config(cfg));

  Json j = cell_json(cell);
  j["n"] = inst.problem.n();
  j["iterations"] = rep.iterations;
  j["lm_rate_" + rate_suffix(cfg)] = json_number(rate_out(rep.lm_rate_nats, cfg));
  if (cfg.with_gmi) {
    const GmiResult g = gmi(inst.problem);
    j["gmi_" + rate_suffix(cfg)] = json_number(rate_out(g.value_nats, cfg));
  }
  j["lambda"] = json_number(rep.lambda_final);
  const Residuals r = rep.final_residuals();
  j["final_residuals"] = Json{{"r_phi", json_number(r.r_phi)},
                              {"r_psi", json_number(r.r_psi)},
                              {"r_lambda", json_number(r.r_lambda)}};
  j["status"] = std::string(to_string(rep.status));
  if (!rep.message.empty()) j["message"] = rep.message;
  if (rep.refine_start >= 0) j["refine_start"] = rep.refine_start;
  j["runtime_ms"] = rep.runtime_ms;
  j["config"] = config_to_json(cfg);
  emit(cfg, out, j.dump(2) + "\n");
  return exit_code(rep.status);
}

int cmd_residuals(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, true);
  const Cell cell = cells(cfg).front();
  const Discretization inst = instance_or_config_error(cell, cfg);
  const SolveReport rep = solve(inst.problem, solver_config(cfg));
  std::ostringstream os;
  write_trace_csv(os, rep.trace, config_to_json(cfg).dump());
  emit(cfg, out, os.str());
  return exit_code(rep.status);
}

namespace {

struct SweepRow {
  std::size_t n = 0;
  double lm = std::nan("");
  double gmi = std::nan("");
  double lambda = std::nan("");
  int iterations = 0;
  int status = kNumericalFailure;
};

SweepRow sweep_cell(const Cell& cell, const RunConfig& cfg) {
  SweepRow row;
  try {
    const Discretization inst = build_instance(cell, cfg);
    row.n = inst.problem.n();
    const SolveReport rep = solve(inst.problem, solver_config(cfg));
    row.lm = rep.lm_rate_nats;
    row.lambda = rep.lambda_final;
    row.iterations = rep.iterations;
    row.status = exit_code(rep.status);
    row.gmi = gmi(inst.problem).value_nats;
  } catch (const std::exception&) {
    row.status = std::max(row.status, static_cast<int>(kNumericalFailure));
  }
  return row;
}

}  // namespace

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, false);
  const std::vector<Cell> todo = cells(cfg);
  std::vector<SweepRow> rows(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) rows[k] = sweep_cell(todo[k], cfg);
  };
  const auto nworkers = static_cast<std::size_t>(std::min<std::size_t>(cfg.workers, todo.size()));
  if (nworkers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const std::string u = rate_suffix(cfg);
  std::ostringstream os;
  os << "# config=" << config_to_json(cfg).dump() << '\n';
  os << "modulation,eta,theta,snr_db,n,lm_rate_" << u << ",gmi_" << u << ",lambda,iterations,status\n";
  int worst = kOk;
  for (std::size_t k = 0; k < todo.size(); ++k) {
    const Cell& c = todo[k];
    const SweepRow& r = rows[k];
    os << c.modulation << ',' << format_double(c.eta) << ',' << format_double(c.theta) << ','
       << format_double(c.snr_db) << ',' << r.n << ','
       << csv_value(rate_out(r.lm, cfg), std::isfinite(r.lm)) << ','
       << csv_value(rate_out(r.gmi, cfg), std::isfinite(r.gmi)) << ','
       << csv_value(r.lambda, std::isfinite(r.lambda)) << ',' << r.iterations << ',' << r.status
       << '\n';
    worst = std::max(worst, r.status);
  }
  emit(cfg, out, os.str());
  return worst;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, false);
  const std::string u = rate_suffix(cfg);
  std::ostringstream os;
  os << "# config=" << config_to_json(cfg).dump() << '\n';
  os << "scheme,N,t_sinkhorn_s,t_oracle_s,speedup,abs_diff,lm_sinkhorn_" << u << ",lm_oracle_" << u
     << ",eta,theta,snr_db,sinkhorn_status,oracle_status\n";
  int worst = kOk;
  for (const Cell& cell : cells(cfg)) {
    const Discretization inst = instance_or_config_error(cell, cfg);
    const DiscreteProblem& p = inst.problem;
    const bool oracle_ok = p.m() + p.n() + 1 <= cfg.hessian_cap;
    double t_s = 0.0, t_o = 0.0;
    SolveReport rs, ro;
    for (int k = 0; k < cfg.trials; ++k) {
      rs = solve(p, solver_config(cfg));
      t_s += rs.runtime_ms;
      if (oracle_ok) {
        OracleOptions oo;
        oo.hessian_cap = cfg.hessian_cap;
        ro = newton_oracle(p, oo);
        t_o += ro.runtime_ms;
      }
    }
    t_s /= 1000.0 * cfg.trials;
    t_o /= 1000.0 * cfg.trials;
    const double lm_s = rate_out(rs.lm_rate_nats, cfg);
    const double lm_o = rate_out(ro.lm_rate_nats, cfg);
    os << cell.modulation << ',' << p.n() << ',' << format_double(t_s) << ','
       << csv_value(t_o, oracle_ok) << ',' << csv_value(t_s > 0.0 ? t_o / t_s : 0.0, oracle_ok)
       << ',' << csv_value(std::abs(lm_s - lm_o), oracle_ok) << ',' << format_double(lm_s) << ','
       << csv_value(lm_o, oracle_ok) << ',' << format_double(cell.eta) << ','
       << format_double(cell.theta) << ',' << format_double(cell.snr_db) << ','
       << to_string(rs.status) << ',' << (oracle_ok ? to_string(ro.status) : "skipped") << '\n';
    worst = std::max(worst, exit_code(rs.status));
    if (oracle_ok) worst = std::max(worst, exit_code(ro.status));
  }
  emit(cfg, out, os.str());
  return worst;
}

int cmd_gmi(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, true);
  const Cell cell = cells(cfg).front();
  const Discretization inst = instance_or_config_error(cell, cfg);
  const GmiResult g = gmi(inst.problem);
  Json j = cell_json(cell);
  j["n"] = inst.problem.n();
  j["gmi_" + rate_suffix(cfg)] = json_number(rate_out(g.value_nats, cfg));
  j["s_star"] = g.s_star;
  j["evaluations"] = g.evaluations;
  j["config"] = config_to_json(cfg);
  emit(cfg, out, j.dump(2) + "\n");
  return kOk;
}

int cmd_dump_problem(const RunConfig& cfg, std::ostream& out) {
  validate(cfg, true);
  const Cell cell = cells(cfg).front();
  const Discretization inst = instance_or_config_error(cell, cfg);
  Json grid = Json{{"n_side", inst.grid.n_side},
                   {"half_width", inst.grid.half_width},
                   {"delta", inst.grid.delta},
                   {"pruned", inst.grid.pruned}};
  Json pts = Json::array();
  for (const Point2& y : inst.grid.points) pts.push_back({y[0], y[1]});
  grid["points"] = std::move(pts);
  Json j;
  j["config"] = config_to_json(cfg);
  j["constellation"] = to_json(build_constellation(*parse_scheme(cell.modulation)));
  j["grid"] = std::move(grid);
  j["problem"] = to_json(inst.problem);
  emit(cfg, out, j.dump() + "\n");
  return kOk;
}

namespace {

struct RawFlags {
  std::vector<std::string> modulation;
  std::vector<double> eta;
  std::vector<std::string> theta;
  std::vector<double> snr_db;
  std::vector<int> grid;
  double half_width = 0.0;
  double prob_floor = 0.0;
  double threshold = 0.0;
  int max_iters = 0;
  double tol = 0.0;
  std::string lambda_strategy;
  double tau = 0.0;
  int trials = 0;
  int workers = 0;
  int hessian_cap = 0;
  std::string out;
  std::string config;
};

struct Bound {
  CLI::App* app = nullptr;
  std::vector<std::pair<std::string, CLI::Option*>> opts;
  CLI::Option* refine = nullptr;
  CLI::Option* with_gmi = nullptr;
  CLI::Option* nats = nullptr;

  bool given(const std::string& name) const {
    for (const auto& [k, o] : opts)
      if (k == name) return o->count() > 0;
    return false;
  }
};

Bound add_common(CLI::App* sc, RawFlags& raw) {
  Bound b;
  b.app = sc;
  auto add = [&](const std::string& key, CLI::Option* o) { b.opts.emplace_back(key, o); };
  add("modulation", sc->add_option("--modulation", raw.modulation, "qpsk, 16qam, 64qam or 256qam")->delimiter(','));
  add("eta", sc->add_option("--eta", raw.eta, "eta2 (eta1 = 1)")->delimiter(','));
  add("theta", sc->add_option("--theta", raw.theta, "rotation in radians, e.g. pi/18")->delimiter(','));
  add("snr_db", sc->add_option("--snr-db", raw.snr_db, "SNR in dB")->delimiter(','));
  add("grid", sc->add_option("--grid", raw.grid, "grid nodes per side")->delimiter(','));
  add("half_width", sc->add_option("--half-width", raw.half_width, "output square half width"));
  add("prob_floor", sc->add_option("--prob-floor", raw.prob_floor, "prune outputs below this probability"));
  add("threshold", sc->add_option("--threshold", raw.threshold, "override the metric threshold T"));
  add("max_iters", sc->add_option("--max-iters", raw.max_iters, "iteration limit"));
  add("tol", sc->add_option("--tol", raw.tol, "residual tolerance"));
  add("lambda_strategy", sc->add_option("--lambda-strategy", raw.lambda_strategy, "project or root"));
  add("tau", sc->add_option("--tau", raw.tau, "step size for the projection update"));
  add("trials", sc->add_option("--trials", raw.trials, "timing repetitions"));
  add("workers", sc->add_option("--workers", raw.workers, "sweep worker threads"));
  add("hessian_cap", sc->add_option("--hessian-cap", raw.hessian_cap, "largest M+N+1 for the Newton oracle"));
  add("out", sc->add_option("--out", raw.out, "output path (stdout when omitted)"));
  add("config", sc->add_option("--config", raw.config, "JSON configuration file"));
  b.refine = sc->add_flag("--refine", "Newton refinement after max_iters");
  b.with_gmi = sc->add_flag("--with-gmi", "also report the GMI");
  b.nats = sc->add_flag("--nats", "report rates in nats");
  return b;
}

RunConfig resolve(const Bound& b, const RawFlags& raw) {
  RunConfig cfg;
  if (b.given("config")) {
    std::ifstream f(raw.config);
    if (!f) throw ConfigError("config", "cannot read '" + raw.config + "'");
    Json j;
    try {
      j = Json::parse(f);
    } catch (const Json::parse_error& e) {
      throw ConfigError("config", std::string("malformed JSON: ") + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  if (b.given("modulation")) cfg.modulation = raw.modulation;
  if (b.given("eta")) cfg.eta = raw.eta;
  if (b.given("theta")) {
    cfg.theta.clear();
    for (std::size_t i = 0; i < raw.theta.size(); ++i) {
      const auto a = parse_angle(raw.theta[i]);
      if (!a) throw ConfigError(indexed("theta", i), "cannot parse angle '" + raw.theta[i] + "'");
      cfg.theta.push_back(*a);
    }
  }
  if (b.given("snr_db")) cfg.snr_db = raw.snr_db;
  if (b.given("grid")) cfg.grid = raw.grid;
  if (b.given("half_width")) cfg.half_width = raw.half_width;
  if (b.given("prob_floor")) cfg.prob_floor = raw.prob_floor;
  if (b.given("threshold")) cfg.threshold = raw.threshold;
  if (b.given("max_iters")) cfg.max_iters = raw.max_iters;
  if (b.given("tol")) cfg.tol = raw.tol;
  if (b.given("lambda_strategy")) {
    cfg.lambda_strategy = parse_strategy(raw.lambda_strategy);
    if (!cfg.lambda_strategy) throw ConfigError("lambda_strategy", "expected project or root");
  }
  if (b.given("tau")) cfg.tau = raw.tau;
  if (b.given("trials")) cfg.trials = raw.trials;
  if (b.given("workers")) cfg.workers = raw.workers;
  if (b.given("hessian_cap")) {
    if (raw.hessian_cap < 1) throw ConfigError("hessian_cap", "must be at least 1");
    cfg.hessian_cap = static_cast<std::size_t>(raw.hessian_cap);
  }
  if (b.given("out")) cfg.out = raw.out;
  if (b.refine->count()) cfg.refine = true;
  if (b.with_gmi->count()) cfg.with_gmi = true;
  if (b.nats->count()) cfg.nats = true;
  if (cfg.theta.empty()) cfg.theta.push_back(kDefaultTheta);
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LM rate of constellation-input channels under a mismatched metric", "lmrate"};
  app.require_subcommand(1);

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"solve", "solve one instance and print a JSON summary", cmd_solve},
      {"residuals", "per-iteration residual trace as CSV", cmd_residuals},
      {"sweep", "LM rate and GMI over a parameter grid as CSV", cmd_sweep},
      {"compare", "Sinkhorn against the Newton oracle as CSV", cmd_compare},
      {"gmi", "GMI of one instance as JSON", cmd_gmi},
      {"dump-problem", "the discretised instance as JSON", cmd_dump_problem},
  };
  std::vector<RawFlags> raws(commands.size());
  std::vector<Bound> bounds;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    CLI::App* sc = app.add_subcommand(std::get<0>(commands[k]), std::get<1>(commands[k]));
    bounds.push_back(add_common(sc, raws[k]));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInvalidConfig;
  }

  for (std::size_t k = 0; k < commands.size(); ++k) {
    if (!bounds[k].app->parsed()) continue;
    try {
      const RunConfig cfg = resolve(bounds[k], raws[k]);
      return std::get<2>(commands[k])(cfg, out);
    } catch (const ConfigError& e) {
      err << "error: invalid config: " << e.what() << '\n';
      return kInvalidConfig;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kNumericalFailure;
    }
  }
  return kInvalidConfig;
}

}  // namespace lmrate::cli
