#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qpt/bitstring.hpp"
#include "qpt/rng.hpp"

namespace qpt {

/// Signaled when a Möbius generating function is evaluated at (or inverted
/// through) a point where its denominator vanishes.
struct pole_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ChannelKind { deletion, insertion, symmetry };

/// One noise stage. Parameters: deletion keeps each bit with probability
/// 1−delta; insertion prepends Geom(1−eta) i.i.d. uniform bits to each input
/// bit; symmetry flips each bit with probability sigma. Zero parameters are
/// accepted as identity-like stages (useful calibration cases).
struct ChannelSpec {
    ChannelKind kind;
    double param;

    static ChannelSpec deletion(double delta);
    static ChannelSpec insertion(double eta);
    static ChannelSpec symmetry(double sigma);
};

/// A pipeline of stages stored in APPLICATION order: stages.front() acts on
/// the input first. (Function-composition notation elsewhere is translated to
/// this convention at the boundary and asserted by tests.)
struct CompositeChannel {
    std::vector<ChannelSpec> stages;
};

/// Parses the channel grammar: comma-separated `del:<float>`, `ins:<float>`,
/// `sym:<float>` in application order, e.g. "del:0.25,sym:0.05".
CompositeChannel parse_channel(std::string_view text);
std::string format_channel(const CompositeChannel& chan);
std::string format_stage(const ChannelSpec& spec);

/// Applies one stage to x, consuming randomness from the stream in a fixed,
/// documented order (deletion and insertion process bits from last to first;
/// symmetry from first to last).
Bits apply_channel(const ChannelSpec& spec, BitSpan x, Stream& stream);

/// Applies all stages in application order.
Bits sample_trace(const CompositeChannel& chan, BitSpan x, Stream& stream);

/// Composition law for two deletion stages: running Del(d1) then Del(d2)
/// equals Del(1 − (1−d1)(1−d2)).
double merge_deletions(double d1, double d2);

struct DeletionSplit {
    double delta_prime; ///< per-stage deletion probability
    int levels;         ///< number of stages
};

/// Smallest L such that delta_prime = 1 − (1−delta)^(1/L) < delta_max;
/// (1−delta_prime)^L reproduces 1−delta to machine precision.
DeletionSplit split_deletion(double delta, double delta_max);

/// Replaces every deletion stage with parameter ≥ delta_max by its split;
/// other stages pass through unchanged.
CompositeChannel split_channel(const CompositeChannel& chan, double delta_max);

/// Rewrites a pipeline into a distribution-equivalent canonical form: one
/// leading symmetry stage (if any flipping occurs) followed by the
/// insertion/deletion stages with consecutive deletions merged and zero-rate
/// stages dropped. Two exact identities justify the rewrite: flipping a
/// uniform inserted bit leaves it uniform, so symmetry commutes with
/// insertion; and flip/keep decisions are independent per position, so
/// symmetry commutes with deletion. Flip rates combine as
/// s1 + s2 − 2·s1·s2 (flip iff exactly one stage flips).
CompositeChannel canonicalize_channel(const CompositeChannel& chan);

/// Möbius transformation G(z) = (a·z + b)/(c·z + d), the per-input-bit
/// output-length probability generating function of a channel stage.
/// Invariants: a·d − b·c ≠ 0 and a + b = c + d (G(1) = 1). Coefficients are
/// kept unnormalized; equality is up to a common scalar.
struct MobiusGF {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
};

/// Per-stage length GF: deletion → (1−δ)z + δ; insertion → (1−η)z/(1−ηz);
/// symmetry → identity.
MobiusGF length_gf(const ChannelSpec& spec);

/// Composition outer∘inner as the product of coefficient matrices.
MobiusGF gf_compose(const MobiusGF& outer, const MobiusGF& inner);

/// Coefficient-matrix inverse; gf_compose(gf_invert(g), g) is the identity
/// up to a scalar.
MobiusGF gf_invert(const MobiusGF& g);

/// Evaluates G at z; throws pole_error when |c·z + d| < 1e−12.
std::complex<double> gf_eval(const MobiusGF& g, std::complex<double> z);

/// G′(1) = (a·d − b·c)/(c + d)²: the mean number of output symbols per input
/// bit. Throws pole_error when |c + d| < 1e−12.
double gf_derivative_at_one(const MobiusGF& g);

/// Length GF of the whole pipeline. For stages [S1..SL] in application order
/// this is G_{S1}∘G_{S2}∘…∘G_{SL}: the FIRST-applied stage sits outermost,
/// because each bit it emits is expanded by the later stages' counts inside
/// the random-sum identity G_total = G_first(G_rest(z)).
MobiusGF composite_gf(const CompositeChannel& chan);

/// z = G⁻¹(e^{iα}) for the composite length GF. At α = 0 returns exactly
/// 1 + 0i (the PGF fixed point). Throws pole_error at denominator zeros.
std::complex<double> inverse_gf_eval(const CompositeChannel& chan, double alpha);

} // namespace qpt
