#pragma once

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/qp_oracle.hpp"

#include <complex>
#include <cstdint>
#include <vector>

namespace qpt {

/// What to estimate: the marker w whose occurrence pattern is wanted, the
/// frequency alpha at which the occurrence generating function is probed,
/// and the bias budget handed to the lifted oracle.
struct KmerQuery {
    Bits marker;        ///< w, |w| >= 1
    double alpha = 0.0; ///< frequency in [-pi, pi]
    double eps = 0.01;  ///< lift bias budget
};

struct KmerEstimate {
    std::complex<double> value{0.0, 0.0}; ///< estimate of exact_kmer_value(x, w, zeta)
    std::size_t n_traces = 0;
    std::vector<double> per_suffix_means; ///< mu_j; index 0 holds j = 1
    std::vector<double> per_suffix_sds;   ///< population sd of the same samples
    double stderr_proxy = 0.0;            ///< propagated sampling-spread proxy for value
    std::complex<double> z_used{1.0, 0.0};
    double alpha = 0.0;
    double gamma_total = 1.0;
    int k_prime = 0;
    double bias_budget = 0.0;  ///< propagated worst-case lift bias (per-eval bias <= eps)
    bool mapping_exact = true; ///< false when the channel shape forced the raw combination
    long long n_hat = -1;      ///< input length estimated from trace lengths, when needed
};

/// Indicator oracle: 1 iff the input's first |w| symbols equal w (inputs
/// shorter than |w| give 0). Deterministic, bound 1, width |w|.
OracleFn marker_indicator(const Bits& w);

/// Ground truth: sum over zero-based start positions l of zeta^l for each
/// occurrence x[l..l+|w|) == w. Requires |w| <= |x|.
std::complex<double> exact_kmer_value(BitSpan x, BitSpan w, std::complex<double> zeta);

/// Estimates the k-mer value of the unknown input from channel traces.
///
/// Core statistic: the marker indicator is lifted against the deletion-split
/// channel and averaged over every one-based trace suffix j into mu_j; the
/// frequency is mapped through z = inverse_gf_eval(chan, alpha). With
/// V = sum_j mu_j z^j and zeta = e^{i alpha}, the suffix transform obeys an
/// exact renewal identity per input position, which is inverted for the
/// occurrence sum S = sum_l zeta^l 1[x matches w at zero-based l]:
///
///  - channels whose canonical form is [sym?] [del d?] [ins e?] (insertion
///    never feeding a deletion): V = W ((1 - d/zeta) S + (d/zeta) mu_1) with
///    W = z/(1 - e z), since each surviving input bit contributes its kept
///    indicator minus d times the next suffix's, and an attached geometric
///    junk run contributes the factor 1/(1 - e z); mu_1 estimates
///    1[x starts with w] exactly (full-trace inversion).
///  - canonical form [sym?] [ins e] [del d]: junk gaps survive deleted bits,
///    so the identity also carries the one-bit-truncated marker's occurrence
///    sum; that sum is estimated recursively (marker w[1:], same traces,
///    same z), bottoming out at the empty marker whose sum is the geometric
///    series of length n, with n estimated from the mean trace length
///    divided by gf_derivative_at_one (reported in n_hat).
///  - any other canonical shape: the raw combination zeta^{-1} V is returned
///    and mapping_exact is set false (residual channel-order bias of order
///    the noise rates remains; documented, not hidden).
///
/// stderr_proxy and bias_budget propagate the per-suffix spread proxy and
/// the per-evaluation lift bias (<= eps) through the same linear inversion.
/// Each (trace, suffix) evaluation uses a stream derived from (seed,
/// TAG_KMER, pack_bits(marker), trace index, suffix index); sums are reduced
/// in fixed 4096-trace chunks in index order, so results are bit-identical
/// for every worker count. Recursion levels use their own marker in the key.
KmerEstimate estimate_kmer(const std::vector<Bits>& traces, const CompositeChannel& chan,
                           const KmerQuery& query, std::uint64_t seed, int threads = 1);

/// Raw sampling-spread proxy of the suffix transform alone:
/// sum_j |z|^j * sd_j / sqrt(N). Diagnostic only, not a certified bound;
/// stderr_proxy additionally carries this through the shape inversion.
/// Requires n_traces >= 2.
double kmer_stderr(const KmerEstimate& est);

/// One full pass of per-suffix lifted-oracle statistics for a single marker.
/// The means and spreads do not depend on the probe frequency, so a sweep is
/// reusable across any number of alphas.
struct KmerSweep {
    Bits marker;
    std::vector<double> means; ///< mu_j; index 0 holds j = 1
    std::vector<double> sds;   ///< population sd of the same samples
    double gamma_total = 1.0;
    int k_prime = 0;
};

/// Everything frequency-independent about estimating one marker on one trace
/// set: the suffix sweeps (one per recursion level for the shapes that need
/// the truncated-marker chain, otherwise just the marker's own) plus the
/// trace-length statistics. Build once, then map any number of frequencies
/// through estimate_kmer_at. The sweeps use the same derived streams as
/// estimate_kmer, so the two paths are bit-identical.
struct KmerPlan {
    Bits marker;
    CompositeChannel chan;        ///< channel as given (split happens internally)
    double eps = 0.0;
    std::size_t n_traces = 0;
    std::size_t maxlen = 0;       ///< longest trace length
    std::vector<KmerSweep> sweeps; ///< [0] = marker; [l] = marker with l bits cut
    long long n_hat = -1;         ///< estimated input length, when the shape needs it
    bool mapping_exact = true;    ///< false when only the raw combination exists
};

/// Runs the trace sweeps for one marker (all recursion levels the channel
/// shape requires). The expensive half of estimate_kmer.
KmerPlan plan_kmer(const std::vector<Bits>& traces, const CompositeChannel& chan,
                   const Bits& marker, double eps, std::uint64_t seed, int threads = 1);

/// Maps one frequency through a precomputed plan. The cheap half of
/// estimate_kmer: estimate_kmer(traces, chan, {w, a, eps}, seed, threads)
/// equals estimate_kmer_at(plan_kmer(traces, chan, w, eps, seed, threads), a)
/// bit for bit.
KmerEstimate estimate_kmer_at(const KmerPlan& plan, double alpha);

} // namespace qpt
