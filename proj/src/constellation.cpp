#include "lmrate/constellation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace lmrate {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::QPSK: return "qpsk";
    case Scheme::QAM16: return "16qam";
    case Scheme::QAM64: return "64qam";
    case Scheme::QAM256: return "256qam";
  }
  return "unknown";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  std::string key;
  for (char ch : name) {
    if (ch == '-' || ch == '_' || ch == ' ') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (key == "qpsk" || key == "4qam" || key == "qam4") return Scheme::QPSK;
  if (key == "16qam" || key == "qam16") return Scheme::QAM16;
  if (key == "64qam" || key == "qam64") return Scheme::QAM64;
  if (key == "256qam" || key == "qam256") return Scheme::QAM256;
  return std::nullopt;
}

namespace {

int side_length(Scheme scheme) {
  switch (scheme) {
    case Scheme::QPSK: return 2;
    case Scheme::QAM16: return 4;
    case Scheme::QAM64: return 8;
    case Scheme::QAM256: return 16;
  }
  return 0;
}

}  // namespace

Constellation build_constellation(Scheme scheme) {
  const int side = side_length(scheme);
  const int m = side * side;
  // Mean energy of the odd lattice {±1, ±3, ...}² with uniform weights is
  // 2(M-1)/3: 2, 10, 42, 170 for the four schemes.
  const double scale = std::sqrt(2.0 * (m - 1) / 3.0);

  Constellation c;
  c.points.reserve(m);
  c.probs.assign(m, 1.0 / m);
  for (int a = 0; a < side; ++a) {
    const double re = (2 * a - (side - 1)) / scale;
    for (int b = 0; b < side; ++b) {
      const double im = (2 * b - (side - 1)) / scale;
      c.points.push_back({re, im});
    }
  }
  return c;
}

std::optional<std::vector<std::size_t>> negation_map(const std::vector<Point2>& points) {
  std::map<Point2, std::size_t> index;
  for (std::size_t i = 0; i < points.size(); ++i) index.emplace(points[i], i);
  std::vector<std::size_t> neg(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto it = index.find(Point2{-points[i][0], -points[i][1]});
    if (it == index.end()) return std::nullopt;
    neg[i] = it->second;
  }
  return neg;
}

std::vector<ConstellationViolation> validate_constellation(const Constellation& c,
                                                           const ValidationOptions& opts) {
  std::vector<ConstellationViolation> out;
  auto report = [&](ConstellationCheck check, double discrepancy, std::string msg) {
    out.push_back({check, discrepancy, std::move(msg)});
  };

  if (c.points.empty()) {
    report(ConstellationCheck::Empty, 0.0, "constellation has no points");
    return out;
  }
  if (c.points.size() != c.probs.size()) {
    report(ConstellationCheck::SizeMismatch,
           static_cast<double>(c.points.size()) - static_cast<double>(c.probs.size()),
           "points and probs differ in length");
    return out;
  }

  bool finite = true;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!std::isfinite(c.points[i][0]) || !std::isfinite(c.points[i][1]) ||
        !std::isfinite(c.probs[i])) {
      finite = false;
      report(ConstellationCheck::NonFinite, 0.0, "entry " + std::to_string(i) + " is not finite");
    }
  }
  if (!finite) return out;

  double total = 0.0;
  double power = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.probs[i] <= 0.0) {
      report(ConstellationCheck::NonPositiveProbability, c.probs[i],
             "probs[" + std::to_string(i) + "] = " + std::to_string(c.probs[i]) + " is not > 0");
    }
    total += c.probs[i];
    power += c.probs[i] * (c.points[i][0] * c.points[i][0] + c.points[i][1] * c.points[i][1]);
  }
  if (std::abs(total - 1.0) > opts.tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "probabilities sum to " << total << " != 1";
    report(ConstellationCheck::ProbabilitySum, total - 1.0, msg.str());
  }
  if (std::abs(power - 1.0) > opts.tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "power: E|X|^2 = " << power << " != 1";
    report(ConstellationCheck::Power, power - 1.0, msg.str());
  }

  {
    std::map<Point2, std::size_t> seen;
    for (std::size_t i = 0; i < c.size(); ++i) {
      auto [it, inserted] = seen.emplace(c.points[i], i);
      if (!inserted) {
        report(ConstellationCheck::DuplicatePoint, 0.0,
               "points " + std::to_string(it->second) + " and " + std::to_string(i) + " coincide");
      }
    }
  }

  if (!opts.allow_asymmetric) {
    auto neg = negation_map(c.points);
    if (!neg) {
      report(ConstellationCheck::NotNegationClosed, 0.0,
             "central-symmetry: point set is not closed under negation");
    } else {
      for (std::size_t i = 0; i < c.size(); ++i) {
        const std::size_t j = (*neg)[i];
        if (i < j && std::abs(c.probs[i] - c.probs[j]) > opts.tol) {
          report(ConstellationCheck::SymmetryProbabilityMismatch, c.probs[i] - c.probs[j],
                 "central-symmetry probability mismatch between points " + std::to_string(i) +
                     " and " + std::to_string(j));
        }
      }
    }
  }
  return out;
}

}  // namespace lmrate
