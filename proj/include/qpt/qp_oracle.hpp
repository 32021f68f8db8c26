#pragma once

#include <functional>
#include <vector>

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/quasiprob.hpp"
#include "qpt/rng.hpp"

namespace qpt {

/// A bounded prefix statistic. The evaluator reads at most the first k bits
/// of its input (inputs shorter than k conventionally evaluate to 0 for
/// indicator-style functions — enforced by the concrete functions built
/// here, not by the wrapper). `stream` may be null for deterministic
/// functions; randomized ones require it.
struct OracleFn {
    int k = 0;           ///< input width
    double bound = 1.0;  ///< C: |output| ≤ C always
    bool deterministic = true;
    Bits marker;         ///< nonempty iff this is a marker indicator (used by exact oracles)
    std::function<double(BitSpan, Stream*)> eval;
};

/// One QP inversion layer wrapped around an inner oracle of width
/// `width_in`; the layer itself reads at most `width_out` bits.
struct LiftedLayer {
    ChannelSpec stage;   ///< the channel stage this layer inverts
    int width_in = 0;    ///< inner oracle width k
    int width_out = 0;   ///< buffer width k' (== width_in except for deletion)
    double gamma = 1.0;  ///< per-draw signed-sampling scale
    double gamma_pow = 1.0; ///< gamma^width_in, the layer's total scale
    double eps = 0.0;    ///< bias budget charged to this layer
};

/// A fully lifted estimator: `layers` in EXECUTION order (the layer inverting
/// the LAST-APPLIED channel stage comes first and reads the raw trace), then
/// `base` on whatever string survives all layers.
struct QPOracle {
    std::vector<LiftedLayer> layers;
    OracleFn base;
    double total_gamma = 1.0; ///< Π over layers of gamma^width_in
    double bound = 1.0;       ///< C' = base.bound · total_gamma
    int input_width = 0;      ///< k' = width_out of the outermost layer
};

/// Buffer width k' for one lifted layer: the number of trace bits the layer
/// may consume. Deletion: ceil(k + 4δ/(1−2δ)·k + 4δ/(1−δ)·(ln(1/(1−2δ))·k +
/// ln(1/eps))) with natural logarithms; insertion/symmetry: k.
/// Requires δ < 1/2 and eps ∈ (0, 1).
int buffer_width(const ChannelSpec& spec, int k, double eps);

/// Tail bound e^{−cΔ}, c = min{1, p/(4(1−p))}, on the probability that a sum
/// of k i.i.d. Geom(p) draws exceeds 4·(1−p)/p·k + Δ.
double geometric_tail_bound(double p, int k, double delta_cap);

/// Wraps one QP inversion layer around f. The returned oracle has width
/// buffer_width(spec, f.k, eps) and bound f.bound·γ^{f.k}; its bias against
/// the noiseless statistic is at most eps·f.bound for every input
/// distribution. Deletion requires δ < 1/2.
OracleFn lift_single(const OracleFn& f, const ChannelSpec& spec, double eps);

/// Lifts f across all stages: the first-applied stage is lifted first
/// (innermost), so the last-applied stage's layer executes first on the
/// trace. eps_total is split equally across layers. Deletion stages must
/// already be split below 1/3 (use split_channel).
QPOracle lift_composite(const OracleFn& f, const CompositeChannel& chan, double eps_total);

/// Per-evaluation instrumentation (diagnostics only).
struct EvalStats {
    std::vector<std::uint64_t> layer_overflows; ///< indexed like QPOracle::layers
    std::uint64_t evals = 0;
};

/// One randomized evaluation of the lifted estimator on a trace. The result
/// is exactly 0 or base-value·(±total_gamma). The stream consumption order
/// (layers outermost-first; within a layer positions in increasing order;
/// deletion draws geometric via repeated Bernoulli; insertion draws the
/// inserted bit only when an insertion actually happens) is part of the
/// reproducibility contract.
double eval_qp(const QPOracle& oracle, BitSpan trace, Stream& stream);

/// Same, recording per-layer overflow counts into stats.
double eval_qp(const QPOracle& oracle, BitSpan trace, Stream& stream, EvalStats& stats);

} // namespace qpt
