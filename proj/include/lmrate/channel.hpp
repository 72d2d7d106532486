#pragma once

#include <cstddef>
#include <vector>

#include "lmrate/constellation.hpp"
#include "lmrate/problem.hpp"
#include "lmrate/types.hpp"

namespace lmrate {

/// Y = H X + Z with H = diag(eta1, eta2) R(theta) and Z having two
/// independent components of variance sigma2. The decoder scores candidates
/// with d(x, y) = |y - h_hat x|^2.
struct ChannelSpec {
  double eta1 = 1.0;
  double eta2 = 1.0;
  double theta = 0.0;
  double sigma2 = 0.5;
  Mat2 h_hat = kIdentity2;

  Mat2 h() const;
  double snr_db() const;
};

/// sigma2 = 10^(-snr_db/10) / 2. Throws std::invalid_argument unless
/// eta1, eta2 > 0 and snr_db is finite.
ChannelSpec build_channel(double eta1, double eta2, double theta, double snr_db);

struct OutputGrid {
  std::vector<Point2> points;       // surviving nodes, in grid order
  double delta = 0.0;
  double half_width = 8.0;
  int n_side = 0;
  std::vector<std::size_t> pruned;  // full-grid indices removed by the floor
};

struct Discretization {
  OutputGrid grid;
  DiscreteProblem problem;
};

struct DiscretizeOptions {
  int n_side = 50;
  double prob_floor = 1e-100;
  double half_width = 8.0;
};

/// Full n_side x n_side grid on [-half_width, half_width]^2. Node
/// r * n_side + s sits at (-hw + r delta, -hw + s delta) and its negation is
/// node n_side^2 - 1 - (r * n_side + s); coordinates are formed so that the
/// negation is bit-exact.
std::vector<Point2> grid_points(int n_side, double half_width);

/// Point-evaluates the Gaussian kernel on the grid, renormalises each row,
/// prunes output nodes whose probability falls below the floor (a node and
/// its negation go together) and assembles the metric, marginals and the
/// threshold of the true joint law.
///
/// Throws std::invalid_argument for n_side < 2, a negative floor or an
/// invalid channel, and std::runtime_error when every node is pruned.
Discretization discretize(const ChannelSpec& channel, const Constellation& c,
                          const DiscretizeOptions& opts);

/// 2 sigma2 + sum_i P(x_i) |H x_i - x_i|^2, the threshold of the
/// continuous-output channel. Only defined for h_hat = I.
double analytic_threshold(const ChannelSpec& channel, const Constellation& c);

}  // namespace lmrate
