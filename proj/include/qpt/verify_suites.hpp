#pragma once

#include <string>
#include <vector>

namespace qpt {

/// Outcome of one self-check suite: `pass` plus a line-per-check report
/// ("ok: ..." / "FAIL: ...") suitable for printing verbatim.
struct SuiteResult {
    bool pass = true;
    std::string report;
};

struct VerifyOptions {
    /// Largest input length enumerated by the unbiasedness grid (1..8).
    int max_n = 6;
};

/// Names accepted by verify_suite, in canonical order:
/// norms, unbiasedness, tail, gf, robson, feasibility.
const std::vector<std::string>& verify_suite_names();

/// Runs one named suite. Throws std::invalid_argument for unknown names.
///
/// Suites:
///  - norms:        signed-weight closed forms (gamma and Σq = 1) across a
///                  20-point sweep per channel family.
///  - unbiasedness: exact lifted-estimator expectation vs the noiseless
///                  statistic on an exhaustive small grid (every x up to
///                  max_n bits, single- and two-stage channels, markers of
///                  width ≤ 2): |value − f(x)| ≤ eps + enumeration tail.
///  - tail:         empirical geometric-sum tail frequencies vs the e^{−cΔ}
///                  bound used to size deletion buffers.
///  - gf:           inverse length generating functions: exact 1 at α = 0
///                  and |z(α)| − 1 ≤ K·α² with K stable across the sweep.
///  - robson:       marker selection returns a candidate of period ≥ k/2
///                  for every prefix up to length 12, k ∈ {4,6,8}.
///  - feasibility:  randomized soundness of the feasibility solver against
///                  instances with known status and known minimum violation.
SuiteResult verify_suite(const std::string& name, const VerifyOptions& opts = {});

} // namespace qpt
