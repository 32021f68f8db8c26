#pragma once

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/qp_oracle.hpp"
#include "qpt/quasiprob.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace qpt {

/// A string over the three-symbol alphabet {0, 1, U}, packed into two
/// 64-bit words. Symbol i of the string lives at bit i (little-endian).
/// U stands for "an unread uniform random bit, independent of everything
/// else"; positions holding U have the umask bit set and the bits bit
/// clear. Lengths up to 63 symbols are supported.
struct PackedU {
    std::uint64_t bits = 0;
    std::uint64_t umask = 0;
    std::uint32_t len = 0;

    static PackedU from_bits(BitSpan x);

    /// Symbol at position i: 0, 1, or 2 (= U).
    int symbol(std::uint32_t i) const {
        if (umask >> i & 1u) return 2;
        return static_cast<int>(bits >> i & 1u);
    }
    void append(int sym); // sym in {0, 1, 2}; throws past 63 symbols
    PackedU prefix(std::uint32_t n) const;
    std::uint32_t u_count() const;

    friend bool operator<(const PackedU& a, const PackedU& b) {
        if (a.len != b.len) return a.len < b.len;
        if (a.bits != b.bits) return a.bits < b.bits;
        return a.umask < b.umask;
    }
    friend bool operator==(const PackedU& a, const PackedU& b) {
        return a.len == b.len && a.bits == b.bits && a.umask == b.umask;
    }
};

std::string format_packed(const PackedU& s); // e.g. "01U1"

/// A finitely supported signed measure on packed strings. std::map keeps
/// iteration deterministic, which keeps summation order (and therefore
/// floating-point results) reproducible.
using SignedDist = std::map<PackedU, double>;

struct ExactDist {
    SignedDist mass;
    /// Probability not represented in `mass` (outcomes that fell outside
    /// the enumeration caps). Zero whenever no insertion stage is later
    /// consumed by a deletion stage and no length cap was exceeded.
    double tail = 0.0;
};

/// Hard resource limits for the exact engine. Exceeding any of them throws
/// std::runtime_error: the engine refuses to silently approximate beyond
/// its declared tail accounting.
struct ExactBudget {
    std::size_t max_work = 600'000'000; // elementary enumeration steps
    int max_input = 12;                // |x|
    int max_stages = 4;
    int max_base_k = 4;                // base oracle window for QP expectations
};

/// Exact distribution of the first `width` symbols of the trace produced by
/// feeding `x` through `chan`. Strings shorter than `width` in the result
/// are complete traces; strings of exactly `width` symbols are prefixes of
/// traces with length >= width. Inserted bits appear as U symbols, with
/// runs of insertions past the window lumped in closed form. The stage
/// list is first canonicalized by exact distribution identities (flips
/// hoisted to one up-front stage, consecutive deletions merged), then
/// adjacent insertion-then-deletion pairs are fused analytically, so the
/// result is exact (tail == 0) unless a deletion stage still consumes
/// insertion output from a non-adjacent earlier stage, in which case the
/// tiny unresolved mass is reported in `tail`.
ExactDist trace_prefix_distribution(BitSpan x, const CompositeChannel& chan, int width,
                                    const ExactBudget& budget = {});

/// Exact distribution of the full channel output as concrete bit strings
/// (inserted bits expanded). Outcomes longer than max_len are lumped into
/// `tail`, so mass + tail always sums to 1.
ExactDist channel_output_distribution(BitSpan x, const CompositeChannel& chan, int max_len,
                                      const ExactBudget& budget = {});

struct ExactValue {
    double value = 0.0;
    /// Bound on |returned - true value| due to enumerated-away mass.
    double error_bound = 0.0;
};

/// E[f(trace)] for trace ~ chan(x), computed by exhaustive enumeration.
/// Requires a deterministic f that reads at most its first f.k symbols.
ExactValue exact_expectation(const OracleFn& f, BitSpan x, const CompositeChannel& chan,
                             const ExactBudget& budget = {});

/// E[eval of the lifted oracle on trace] for trace ~ chan(x), with the
/// expectation taken over both the channel and the oracle's own sampling.
/// Computed by exact signed-measure pushforward through every layer: the
/// per-position draws are summed in closed form (deletion layers via a
/// budget-truncated weight recurrence), not sampled. error_bound covers
/// only channel-side enumeration tails; it is zero unless the channel,
/// after canonicalization (flips hoisted to the front, consecutive
/// deletions merged, each insertion fused with an immediately following
/// deletion), still contains an insertion stage separated from a later
/// deletion stage.
ExactValue exact_qp_expectation(const QPOracle& oracle, BitSpan x, const CompositeChannel& chan,
                                const ExactBudget& budget = {});

/// The signed measure the lifted layers induce on base-oracle inputs when
/// run on one fixed trace (truncated to the oracle's input window), with
/// all per-position draws summed in closed form. Folding this against
/// oracle.base (see fold_measure) gives E[eval on that trace] over the
/// oracle's own sampling; callers that evaluate many markers with the same
/// layer stack can cache the measure per trace and fold it repeatedly.
SignedDist exact_qp_trace_measure(const QPOracle& oracle, BitSpan trace,
                                  const ExactBudget& budget = {});

/// E[eval of the lifted oracle on one enumerated trace prefix] over the
/// oracle's own sampling, in closed form. The prefix is a packed string as
/// produced by trace_prefix_distribution (unresolved uniform symbols
/// allowed). The pushforward and fold are linear in the trace measure, so
/// summing prefix_value(s) * mass(s) over a prefix distribution equals
/// exact_qp_expectation's value; callers sweeping many inputs through one
/// oracle can cache the per-prefix values, which depend only on the oracle.
double exact_qp_prefix_value(const QPOracle& oracle, const PackedU& prefix,
                             const ExactBudget& budget = {});

/// Integrate a deterministic oracle against a signed measure over packed
/// strings, averaging f uniformly over unresolved symbols.
double fold_measure(const SignedDist& dist, const OracleFn& f,
                    const ExactBudget& budget = {});

/// Canonical ordering of all bit strings of length <= max_len: sorted by
/// (length, value), where bit i of the value is symbol i of the string.
/// Index 0 is the empty string; strings of length l start at index 2^l - 1.
std::vector<Bits> matrix_states(int max_len);
std::size_t state_index(BitSpan s);

/// The channel as a column-stochastic matrix over matrix_states(max_len)
/// plus one final absorbing state for outputs longer than max_len (only
/// insertion can reach it). Entry (y, x) is P[output = y | input = x].
Matrix matrix_form(const ChannelSpec& spec, int max_len);

} // namespace qpt
