#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/kmer.hpp"

namespace qpt {

/// Smallest period of w: the least p >= 1 with w[:|w|-p] == w[p:]. Always in
/// [1, |w|]; |w| means only the trivial full-length period. Requires w
/// nonempty.
int period(BitSpan w);

/// One possible next-bit extension: the bit, the length-k suffix of
/// prefix+bit, and that suffix's period.
struct MarkerCandidate {
    int bit = 0;
    Bits marker;
    int period = 0;
};

/// For each candidate next bit b, the length-k suffix of prefix+b with its
/// period. At least one of the two candidates always has period >= k/2
/// (asserted; a violation would be an implementation bug, not an input
/// error). Requires |prefix| >= k-1 and k >= 1.
std::array<MarkerCandidate, 2> choose_marker(BitSpan prefix, int k);

/// M equally spaced frequencies spanning [-alpha_max, alpha_max]; M = 1 gives
/// {0}. Spacing 2 alpha_max / (M-1) for M >= 2. Requires M >= 1.
std::vector<double> frequency_net(double alpha_max, int M);

/// One probe frequency with its measured spectrum value and tolerance.
struct NetPoint {
    double alpha = 0.0;
    std::complex<double> estimate{0.0, 0.0};
    double tol = 0.0; ///< must be positive
};

/// Everything known about one marker's occurrence vector v over positions
/// 0..n-k: spectrum constraints on the net, an occurrence-spacing window
/// (any window of sparsity_window consecutive positions holds at most one
/// occurrence; 0 disables), and positions pinned to known values.
struct MarkerConstraintSet {
    Bits marker;
    int n = 0;                               ///< input length; k = |marker|
    std::vector<NetPoint> net;               ///< sorted by alpha
    int sparsity_window = 0;
    std::vector<std::pair<int, int>> fixed;  ///< (position, 0-or-1)
};

/// One inequality coef . v <= bound over the problem's variables.
struct LinearRow {
    std::vector<double> coef;
    double bound = 0.0;
};

/// Box-bounded linear feasibility instance.
struct FeasibilityProblem {
    int nvars = 0;
    std::vector<double> lo, hi;
    std::vector<LinearRow> rows;
    double eps_feas = 1e-7; ///< verdict threshold on the summed violation
};

enum class FeasVerdict { feasible, infeasible, undecided };

/// Solver outcome. `violation` is always recomputed directly from the
/// problem at `witness` (sum over rows of max(0, coef . v - bound)), so a
/// feasible verdict re-checks by construction and an infeasible one's
/// certificate is reproducible.
struct FeasibilityResult {
    FeasVerdict verdict = FeasVerdict::undecided;
    std::vector<double> witness;
    double violation = 0.0;
    int iterations = 0;
};

/// Lowers a constraint set to rows: four rows per net point (+-real,
/// +-imaginary of |sum_j v_j e^{i j alpha} - estimate| <= tol), one row per
/// sparsity window, tight box bounds for the fixed positions. Requires
/// n >= |marker|, positive tolerances, sorted net frequencies.
FeasibilityProblem build_feasibility(const MarkerConstraintSet& cs);

/// Minimizes the summed violation over the box with a dense bounded-variable
/// simplex (Bland's rule, so no cycling). Verdict: feasible when the minimum
/// is <= eps_feas, infeasible with the achieved minimum otherwise, undecided
/// if the iteration cap is hit (callers treat undecided as feasible).
FeasibilityResult solve_feasibility(const FeasibilityProblem& p);

/// The measured spectrum of one marker over the whole net.
struct MarkerEstimates {
    Bits marker;
    std::vector<NetPoint> points;
};

enum class ReconstructMode { lp, exhaustive };

struct ReconstructParams {
    ReconstructMode mode = ReconstructMode::lp;
    int n = 0;          ///< input length (known)
    int k = 0;          ///< marker length; 0 = default_marker_length(n)
    double alpha_max = 0.78539816339744830962; ///< net half-width (pi/4)
    int net_size = 64;  ///< M
    double eps = 0.002; ///< lift bias budget per estimate
    double c1 = 3.0;    ///< tol = c1 * stderr_proxy + c2 * bias_budget
    double c2 = 1.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// On-demand k-mer estimates per marker, shared across hypotheses (and
/// across modes when the caller reuses one cache): one trace sweep per
/// marker serves the whole net. Estimates are keyed by (seed, marker, trace
/// index, suffix index) streams, so values do not depend on the order in
/// which hypotheses request them. Holds a reference to the traces; the
/// caller keeps them alive.
class MarkerEstimateCache {
  public:
    MarkerEstimateCache(const std::vector<Bits>& traces, const CompositeChannel& chan,
                        const ReconstructParams& params);

    /// Computes (first use) or returns the marker's net estimates, with
    /// tolerances c1 * stderr_proxy + c2 * bias_budget, floored at 1e-9.
    const MarkerEstimates& get(const Bits& marker);

    const std::vector<double>& net() const { return net_; }
    const ReconstructParams& params() const { return params_; }

  private:
    const std::vector<Bits>* traces_;
    CompositeChannel chan_;
    ReconstructParams params_;
    std::vector<double> net_;
    std::map<std::uint64_t, MarkerEstimates> cache_;
};

/// Diagnostics for one sequential bit decision (zero-based position of the
/// bit being decided; candidate markers for appending 0 / 1; per-candidate
/// feasibility — an undecided solve counts as feasible — and summed
/// residuals over both marker blocks; the chosen bit, -1 on failure).
struct StepDiagnostics {
    int position = 0;
    Bits marker0, marker1;
    bool feasible0 = false, feasible1 = false;
    double residual0 = 0.0, residual1 = 0.0;
    int chosen_bit = -1;
};

struct ReconstructResult {
    Bits output;             ///< length n on success; the partial prefix on failure
    bool success = false;
    std::string failure_reason;
    int k_used = 0;
    Bits bootstrap_marker;          ///< lp mode: chosen length-k prefix
    double bootstrap_residual = 0.0;
    std::vector<StepDiagnostics> steps; ///< lp mode
    double best_score = 0.0;        ///< exhaustive mode: winning score
    double runner_up_score = 0.0;   ///< exhaustive mode: second-best score
};

/// Smallest k with 2^k >= 4n, capped at min(n, 16).
int default_marker_length(int n);

/// End-to-end reconstruction of the length-n input from traces.
///
/// lp mode: the length-k prefix is chosen by testing, for each of the 2^k
/// candidate prefixes w, the feasibility of w's constraint block with the
/// occurrence at position 0 pinned to 1 (smallest summed residual wins).
/// Each later bit is decided by the hypothesis pair: appending b pins, for
/// BOTH candidate markers, every occurrence position that the hypothesized
/// prefix fully determines (so the candidate's own marker is pinned present
/// and the rival marker pinned absent at the new position), and the bit
/// whose pair of blocks is feasible wins; when both are, the smaller summed
/// residual wins, with ties going to bit 0. Both candidates infeasible is a
/// reported failure.
///
/// exhaustive mode: every length-n candidate (guard n <= 22) is scored by
/// the total squared deviation of its exact k-mer spectra from the measured
/// estimates over all 2^k markers and the whole net; the argmin wins (ties:
/// numerically smaller candidate). An independently correct oracle for lp
/// mode.
ReconstructResult reconstruct(const std::vector<Bits>& traces, const CompositeChannel& chan,
                              const ReconstructParams& params);

/// Same, but sharing a caller-owned estimate cache (the two modes then see
/// identical estimates; repeated calls skip the trace sweeps). params.n,
/// mode, and k must be consistent with the cache's params for meaningful
/// results; estimates are read through cache.params().
ReconstructResult reconstruct_with(MarkerEstimateCache& cache, const ReconstructParams& params);

} // namespace qpt
