#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lmrate/channel.hpp"
#include "lmrate/serialize.hpp"
#include "lmrate/sinkhorn.hpp"

namespace lmrate::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidConfig = 1,
  kMaxIters = 2,
  kNumericalFailure = 3,
};

/// Invalid configuration; path names the offending field, e.g. "eta[1]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& reason)
      : std::runtime_error(path + ": " + reason), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct RunConfig {
  std::vector<std::string> modulation{"qpsk"};
  std::vector<double> eta{0.9};  // eta2; eta1 is fixed at 1
  std::vector<double> theta;     // radians; pi/18 when empty
  std::vector<double> snr_db{0.0};
  std::vector<int> grid{50};     // n_side
  double half_width = 8.0;
  double prob_floor = 1e-100;
  std::optional<double> threshold;

  int max_iters = 500;
  double tol = 1e-10;
  std::optional<LambdaStrategy> lambda_strategy;
  std::optional<double> tau;
  bool refine = false;

  int trials = 1;
  int workers = 1;
  std::size_t hessian_cap = 1024;
  bool with_gmi = false;
  bool nats = false;
  std::string out;
};

/// Accepts plain numbers and forms such as "pi/18", "-pi/12", "2*pi/3",
/// "0.5pi".
std::optional<double> parse_angle(std::string_view text);

/// Overlays the fields present in j onto base. Unknown keys and wrong types
/// raise ConfigError with a "config.<field>" path.
RunConfig config_from_json(const Json& j, RunConfig base = {});

/// The fully resolved configuration, as echoed into every artifact.
Json config_to_json(const RunConfig& cfg);

/// Field-level checks; single_cell additionally requires one value per list.
void validate(const RunConfig& cfg, bool single_cell);

SolverConfig solver_config(const RunConfig& cfg);

struct Cell {
  std::string modulation;
  double eta = 0.0;
  double theta = 0.0;
  double snr_db = 0.0;
  int grid = 0;
};

/// Cartesian product in lexicographic order.
std::vector<Cell> cells(const RunConfig& cfg);

Discretization build_instance(const Cell& cell, const RunConfig& cfg);

int cmd_solve(const RunConfig& cfg, std::ostream& out);
int cmd_residuals(const RunConfig& cfg, std::ostream& out);
int cmd_sweep(const RunConfig& cfg, std::ostream& out);
int cmd_compare(const RunConfig& cfg, std::ostream& out);
int cmd_gmi(const RunConfig& cfg, std::ostream& out);
int cmd_dump_problem(const RunConfig& cfg, std::ostream& out);

/// Full command line entry point. Artifacts go to --out when given (written
/// only after the computation succeeds) and to out otherwise.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code(SolveStatus s);

}  // namespace lmrate::cli
