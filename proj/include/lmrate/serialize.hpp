#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmrate/constellation.hpp"
#include "lmrate/dual.hpp"
#include "lmrate/problem.hpp"
#include "lmrate/sinkhorn.hpp"

namespace lmrate {

using Json = nlohmann::ordered_json;

/// %.17g; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double v);

/// Finite numbers as-is, non-finite ones as null.
Json json_number(double v);

/// {"points": [[re, im], ...], "probs": [...]}
Json to_json(const Constellation& c);

/// Inverse of to_json. Throws std::invalid_argument naming the bad field.
Constellation constellation_from_json(const Json& j);

Json to_json(const DiscreteProblem& p);

/// {m_d, delta, l_lambda, m_lambda, m0, s0, e0, bound_satisfied, worst_margin}
/// followed by the remaining diagnostics.
Json to_json(const ConvergenceCertificate& c);

/// Per-iteration CSV: iter, r_phi, r_psi, r_lambda, dual_objective,
/// lm_rate_nats, lambda. A non-empty config_echo is written first as a
/// "# config=" comment line.
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace,
                     const std::string& config_echo = {});

}  // namespace lmrate
