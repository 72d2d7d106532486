#include "lmrate/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lmrate {

Mat2 ChannelSpec::h() const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return Mat2{{{eta1 * c, eta1 * s}, {-eta2 * s, eta2 * c}}};
}

double ChannelSpec::snr_db() const { return 10.0 * std::log10(1.0 / (2.0 * sigma2)); }

ChannelSpec build_channel(double eta1, double eta2, double theta, double snr_db) {
  if (!(eta1 > 0.0) || !(eta2 > 0.0) || !std::isfinite(eta1) || !std::isfinite(eta2))
    throw std::invalid_argument("channel scaling factors must be positive and finite");
  if (!std::isfinite(theta)) throw std::invalid_argument("rotation angle must be finite");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("snr_db must be finite");
  ChannelSpec ch;
  ch.eta1 = eta1;
  ch.eta2 = eta2;
  ch.theta = theta;
  ch.sigma2 = std::pow(10.0, -snr_db / 10.0) / 2.0;
  return ch;
}

std::vector<Point2> grid_points(int n_side, double half_width) {
  if (n_side < 2) throw std::invalid_argument("grid needs at least two nodes per side");
  const double step = half_width / (n_side - 1);
  std::vector<double> coord(n_side);
  // (2r - (n-1)) is an exact integer that flips sign under r -> n-1-r.
  for (int r = 0; r < n_side; ++r) coord[r] = (2 * r - (n_side - 1)) * step;
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(n_side) * n_side);
  for (int r = 0; r < n_side; ++r)
    for (int s = 0; s < n_side; ++s) pts.push_back({coord[r], coord[s]});
  return pts;
}

namespace {

// Row-normalised Gaussian kernel over the given output nodes. Rows of
// negated inputs are mirrored so the kernel symmetry holds bit for bit.
Matrix gaussian_kernel(const std::vector<Point2>& hx, const std::vector<Point2>& ys,
                       double sigma2, const std::vector<std::size_t>& x_neg, bool mirror) {
  const auto m = static_cast<Eigen::Index>(hx.size());
  const auto n = static_cast<Eigen::Index>(ys.size());
  Matrix w(m, n);
  std::vector<double> expo(ys.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    if (mirror && static_cast<Eigen::Index>(x_neg[i]) < i) {
      const auto src = static_cast<Eigen::Index>(x_neg[i]);
      for (Eigen::Index j = 0; j < n; ++j) w(i, j) = w(src, n - 1 - j);
      continue;
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      expo[j] = -squared_distance(ys[j], hx[i]) / (2.0 * sigma2);
      peak = std::max(peak, expo[j]);
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      w(i, j) = std::exp(expo[j] - peak);
      total += w(i, j);
    }
    w.row(i) /= total;
  }
  return w;
}

}  // namespace

Discretization discretize(const ChannelSpec& channel, const Constellation& c,
                          const DiscretizeOptions& opts) {
  if (opts.n_side < 2) throw std::invalid_argument("n_side must be at least 2");
  if (!(opts.prob_floor >= 0.0)) throw std::invalid_argument("prob_floor must be non-negative");
  if (!(opts.half_width > 0.0)) throw std::invalid_argument("half_width must be positive");
  if (!(channel.sigma2 > 0.0) || !(channel.eta1 > 0.0) || !(channel.eta2 > 0.0))
    throw std::invalid_argument("invalid channel parameters");
  if (c.size() == 0 || c.points.size() != c.probs.size())
    throw std::invalid_argument("invalid constellation");

  const Mat2 h = channel.h();
  std::vector<Point2> hx(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) hx[i] = apply(h, c.points[i]);

  std::vector<std::size_t> x_neg;
  if (auto neg = negation_map(c.points)) {
    bool probs_match = true;
    for (std::size_t i = 0; i < c.size(); ++i) probs_match &= c.probs[i] == c.probs[(*neg)[i]];
    if (probs_match) x_neg = std::move(*neg);
  }
  const bool symmetric = !x_neg.empty();

  Vector p_x(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) p_x[static_cast<Eigen::Index>(i)] = c.probs[i];

  const std::vector<Point2> full = grid_points(opts.n_side, opts.half_width);
  const std::size_t n_full = full.size();
  Matrix w_full = gaussian_kernel(hx, full, channel.sigma2, x_neg, symmetric);

  const Vector p_y_full = output_marginal(p_x, w_full, x_neg);

  std::vector<bool> keep(n_full);
  std::vector<std::size_t> pruned;
  for (std::size_t j = 0; j < n_full; ++j) {
    const double v = p_y_full[static_cast<Eigen::Index>(j)];
    keep[j] = v > 0.0 && v >= opts.prob_floor;
  }
  if (symmetric) {
    for (std::size_t j = 0; j < n_full; ++j) {
      if (keep[j] != keep[n_full - 1 - j])
        throw std::logic_error("asymmetric pruning of the output grid");
    }
  }
  std::vector<Point2> ys;
  for (std::size_t j = 0; j < n_full; ++j) {
    if (keep[j]) ys.push_back(full[j]);
    else pruned.push_back(j);
  }
  if (ys.empty()) throw std::runtime_error("degenerate grid: every output node was pruned");

  Matrix w = pruned.empty() ? std::move(w_full)
                            : gaussian_kernel(hx, ys, channel.sigma2, x_neg, symmetric);

  const auto m = static_cast<Eigen::Index>(c.size());
  const auto n = static_cast<Eigen::Index>(ys.size());
  Matrix d(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Point2 hat = apply(channel.h_hat, c.points[i]);
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = squared_distance(ys[j], hat);
  }

  std::vector<std::size_t> y_neg;
  if (symmetric) {
    y_neg.resize(ys.size());
    for (std::size_t k = 0; k < ys.size(); ++k) y_neg[k] = ys.size() - 1 - k;
  }

  Discretization out;
  out.grid.points = std::move(ys);
  out.grid.delta = 2.0 * opts.half_width / (opts.n_side - 1);
  out.grid.half_width = opts.half_width;
  out.grid.n_side = opts.n_side;
  out.grid.pruned = std::move(pruned);
  out.problem = make_problem(std::move(d), std::move(p_x), std::move(w), std::nullopt,
                             std::move(x_neg), std::move(y_neg));
  return out;
}

double analytic_threshold(const ChannelSpec& channel, const Constellation& c) {
  const Mat2& hh = channel.h_hat;
  if (hh[0][0] != 1.0 || hh[0][1] != 0.0 || hh[1][0] != 0.0 || hh[1][1] != 1.0)
    throw std::invalid_argument("analytic threshold assumes an identity decoder matrix");
  const Mat2 h = channel.h();
  double mismatch = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    mismatch += c.probs[i] * squared_distance(apply(h, c.points[i]), c.points[i]);
  return 2.0 * channel.sigma2 + mismatch;
}

}  // namespace lmrate
