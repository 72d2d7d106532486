#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lmrate/channel.hpp"
#include "lmrate/constellation.hpp"
#include "lmrate/problem.hpp"

namespace lmrate::testing {

/// LMRATE_SEED when set, a fixed default otherwise.
inline std::uint64_t seed() {
  if (const char* s = std::getenv("LMRATE_SEED")) return std::strtoull(s, nullptr, 10);
  return 20240611ULL;
}

inline std::mt19937_64 rng(std::uint64_t salt = 0) { return std::mt19937_64(seed() + salt); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline Discretization awgn_instance(Scheme scheme, int n_side, double snr_db = 0.0,
                                    double eta = 0.9, double theta = std::numbers::pi / 18.0,
                                    double half_width = 8.0) {
  const ChannelSpec ch = build_channel(1.0, eta, theta, snr_db);
  return discretize(ch, build_constellation(scheme), DiscretizeOptions{n_side, 1e-100, half_width});
}

inline DiscreteProblem qpsk_problem(int n_side, double snr_db = 0.0) {
  return awgn_instance(Scheme::QPSK, n_side, snr_db).problem;
}

/// Points closed under negation: pairs (v, -v), plus the origin when count
/// is odd. The negation of index k is count - 1 - k.
inline std::vector<Point2> symmetric_points(std::mt19937_64& g, int count, double scale) {
  std::vector<Point2> half;
  for (int k = 0; k < count / 2; ++k) half.push_back({uniform(g, -scale, scale), uniform(g, -scale, scale)});
  std::vector<Point2> pts = half;
  if (count % 2) pts.push_back({0.0, 0.0});
  for (auto it = half.rbegin(); it != half.rend(); ++it) pts.push_back({-(*it)[0], -(*it)[1]});
  return pts;
}

inline std::vector<std::size_t> reversal(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t k = 0; k < n; ++k) r[k] = n - 1 - k;
  return r;
}

inline Matrix squared_distances(const std::vector<Point2>& xs, const std::vector<Point2>& ys) {
  Matrix d(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) d(i, j) = squared_distance(ys[j], xs[i]);
  return d;
}

/// Centrally symmetric random instance with a Gaussian kernel around a
/// perturbed image of each input, so the metric is mismatched.
inline DiscreteProblem random_symmetric_problem(std::mt19937_64& g, int m, int n) {
  const auto xs = symmetric_points(g, m, 1.0);
  const auto ys = symmetric_points(g, n, 2.0);
  const double c = std::cos(0.3), s = std::sin(0.3);
  const Mat2 h{{{0.9 * c, 0.9 * s}, {-s, c}}};
  std::vector<Point2> hx;
  for (const auto& x : xs) hx.push_back(apply(h, x));
  Matrix w = squared_distances(hx, ys);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    w.row(i) = (-w.row(i).array()).exp().matrix();
    w.row(i) /= w.row(i).sum();
  }
  const Vector px = Vector::Constant(m, 1.0 / m);
  return make_problem(squared_distances(xs, ys), px, w, std::nullopt, reversal(m), reversal(n));
}

}  // namespace lmrate::testing
