#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmrate/types.hpp"

namespace lmrate {

enum class Scheme { QPSK, QAM16, QAM64, QAM256 };

std::string_view to_string(Scheme scheme);

/// Accepts "qpsk", "16qam", "qam16", "16-qam" and the like (case-insensitive).
std::optional<Scheme> parse_scheme(std::string_view name);

/// Input alphabet with its distribution. Immutable once built.
struct Constellation {
  std::vector<Point2> points;
  std::vector<double> probs;

  std::size_t size() const { return points.size(); }
};

/// Square-grid alphabet with uniform probabilities and unit average power.
///
/// Points are ordered row by row over the odd-integer lattice, so the
/// negation of point i is point size()-1-i.
Constellation build_constellation(Scheme scheme);

enum class ConstellationCheck {
  Empty,
  SizeMismatch,
  NonFinite,
  NonPositiveProbability,
  ProbabilitySum,
  Power,
  DuplicatePoint,
  NotNegationClosed,
  SymmetryProbabilityMismatch,
};

struct ConstellationViolation {
  ConstellationCheck check;
  double discrepancy;
  std::string message;
};

struct ValidationOptions {
  double tol = 1e-12;
  // Skips the central-symmetry checks. Symmetry is what guarantees a unique
  // multiplier root, so callers that set this should not use RootFind.
  bool allow_asymmetric = false;
};

std::vector<ConstellationViolation> validate_constellation(const Constellation& c,
                                                           const ValidationOptions& opts = {});

/// Index of the exact negation of every point, or nullopt if the set is not
/// closed under negation.
std::optional<std::vector<std::size_t>> negation_map(const std::vector<Point2>& points);

}  // namespace lmrate
