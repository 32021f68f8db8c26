#include "qpt/qp_oracle.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace qpt {

int buffer_width(const ChannelSpec& spec, int k, double eps) {
    if (k < 0) throw std::invalid_argument("buffer_width: k must be nonnegative");
    if (!(eps > 0.0 && eps < 1.0)) {
        throw std::invalid_argument("buffer_width: eps must lie in (0, 1)");
    }
    if (spec.kind != ChannelKind::deletion) return k;
    double delta = spec.param;
    if (!(delta < 0.5)) {
        throw std::invalid_argument("buffer_width: deletion parameter must be < 1/2");
    }
    if (delta == 0.0) return k;
    double kd = static_cast<double>(k);
    double width = kd + 4.0 * delta / (1.0 - 2.0 * delta) * kd +
                   4.0 * delta / (1.0 - delta) *
                       (std::log(1.0 / (1.0 - 2.0 * delta)) * kd + std::log(1.0 / eps));
    return static_cast<int>(std::ceil(width));
}

double geometric_tail_bound(double p, int k, double delta_cap) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("geometric_tail_bound: p in (0,1)");
    if (k < 1) throw std::invalid_argument("geometric_tail_bound: k >= 1");
    if (!(delta_cap >= 0.0)) throw std::invalid_argument("geometric_tail_bound: delta >= 0");
    double c = std::min(1.0, p / (4.0 * (1.0 - p)));
    return std::exp(-c * delta_cap);
}

namespace {

struct LayerOutcome {
    bool overflow = false;
    int sign = 1;
};

/// Applies one QP layer's randomness to `in`, writing the string handed to
/// the wrapped inner oracle into out[0..out_len). `out` must have room for
/// layer.width_in bytes. Shared by the closure combinator and the layered
/// evaluator so the two are identical by construction, including stream
/// consumption order.
LayerOutcome apply_qp_layer(const LiftedLayer& layer, BitSpan in, std::uint8_t* out,
                            std::size_t& out_len, Stream& stream) {
    LayerOutcome res;
    out_len = 0;
    const int k = layer.width_in;
    switch (layer.stage.kind) {
    case ChannelKind::deletion: {
        // Skip-sampling view of "delete j_i bits at position i": skip j_i
        // trace bits, then keep one (when the string is not yet exhausted).
        const double p = (1.0 - 2.0 * layer.stage.param) / (1.0 - layer.stage.param);
        int budget = layer.width_out - layer.width_in;
        std::size_t pos = 0;
        for (int i = 0; i < k; ++i) {
            std::uint64_t j = stream.geometric(p);
            budget -= static_cast<int>(j);
            if (budget < 0) { // overflow guard: halt and return 0
                res.overflow = true;
                return res;
            }
            if (j & 1u) res.sign = -res.sign;
            pos += j;
            if (pos < in.size()) {
                out[out_len++] = in[pos];
                ++pos;
            }
            // Exhausted string: the draw still counts toward the budget and
            // the sign, but no bit is produced (the inner oracle sees a
            // short string).
        }
        break;
    }
    case ChannelKind::insertion: {
        const double p1 = layer.stage.param / (1.0 + layer.stage.param);
        const std::size_t len = std::min(in.size(), static_cast<std::size_t>(k));
        std::size_t src = 0;
        std::size_t cur_len = len; // current (evolving) string length
        for (int i = 0; i < k; ++i) {
            bool insert = stream.bernoulli(p1);
            if (insert) res.sign = -res.sign;
            if (insert && static_cast<std::size_t>(i) < cur_len) {
                // Insert a uniform bit before position i+1 of the current
                // string; the bit value is drawn only when actually used.
                out[out_len++] = static_cast<std::uint8_t>(stream.next_bit());
                ++cur_len;
            } else if (!insert && src < len) {
                out[out_len++] = in[src];
                ++src;
            }
            // Positions past the current end are no-ops: the sign still
            // flips (the signed weights at such positions cancel to 1 in
            // expectation) but the string is unchanged.
        }
        break;
    }
    case ChannelKind::symmetry: {
        const std::size_t len = std::min(in.size(), static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < len; ++i) out[i] = in[i];
        out_len = len;
        for (int i = 0; i < k; ++i) {
            bool flip = stream.bernoulli(layer.stage.param);
            if (flip) {
                res.sign = -res.sign;
                if (static_cast<std::size_t>(i) < len) out[static_cast<std::size_t>(i)] ^= 1u;
            }
        }
        break;
    }
    }
    return res;
}

LiftedLayer make_layer(const ChannelSpec& spec, int width_in, double eps) {
    LiftedLayer layer;
    layer.stage = spec;
    layer.width_in = width_in;
    layer.width_out = buffer_width(spec, width_in, eps);
    layer.gamma = qp_for_stage(spec).gamma;
    layer.gamma_pow = std::pow(layer.gamma, width_in);
    layer.eps = eps;
    return layer;
}

} // namespace

OracleFn lift_single(const OracleFn& f, const ChannelSpec& spec, double eps) {
    if (!f.eval) throw std::invalid_argument("lift_single: oracle has no evaluator");
    if (spec.kind == ChannelKind::deletion && !(spec.param < 0.5)) {
        throw std::invalid_argument("lift_single: deletion parameter must be < 1/2 (split first)");
    }
    LiftedLayer layer = make_layer(spec, f.k, eps);
    OracleFn g;
    g.k = layer.width_out;
    g.bound = f.bound * layer.gamma_pow;
    g.deterministic = false;
    auto inner = f.eval;
    g.eval = [layer, inner](BitSpan input, Stream* stream) -> double {
        if (stream == nullptr) {
            throw std::invalid_argument("lifted oracle requires a random stream");
        }
        Bits tmp(static_cast<std::size_t>(layer.width_in));
        std::size_t len = 0;
        LayerOutcome o = apply_qp_layer(layer, input, tmp.data(), len, *stream);
        if (o.overflow) return 0.0;
        return inner(BitSpan(tmp.data(), len), stream) * layer.gamma_pow * o.sign;
    };
    return g;
}

QPOracle lift_composite(const OracleFn& f, const CompositeChannel& chan, double eps_total) {
    if (!f.eval) throw std::invalid_argument("lift_composite: oracle has no evaluator");
    if (chan.stages.empty()) throw std::invalid_argument("lift_composite: empty channel");
    if (!(eps_total > 0.0 && eps_total < 1.0)) {
        throw std::invalid_argument("lift_composite: eps_total must lie in (0, 1)");
    }
    for (const ChannelSpec& spec : chan.stages) {
        if (spec.kind == ChannelKind::deletion && spec.param >= 1.0 / 3.0) {
            throw std::invalid_argument(
                "lift_composite: deletion stage not split below 1/3 (use split_channel)");
        }
    }
    const double eps_layer = eps_total / static_cast<double>(chan.stages.size());
    QPOracle oracle;
    oracle.base = f;
    oracle.total_gamma = 1.0;
    int cur_k = f.k;
    // Lift in application order (innermost first); execution order is the
    // reverse, so the last-applied stage is inverted first.
    for (const ChannelSpec& spec : chan.stages) {
        LiftedLayer layer = make_layer(spec, cur_k, eps_layer);
        oracle.total_gamma *= layer.gamma_pow;
        cur_k = layer.width_out;
        oracle.layers.insert(oracle.layers.begin(), layer);
    }
    oracle.input_width = cur_k;
    oracle.bound = f.bound * oracle.total_gamma;
    return oracle;
}

namespace {

constexpr std::size_t kStackWidth = 256;

double eval_qp_impl(const QPOracle& oracle, BitSpan trace, Stream& stream, EvalStats* stats) {
    if (stats != nullptr) {
        if (stats->layer_overflows.size() != oracle.layers.size()) {
            stats->layer_overflows.assign(oracle.layers.size(), 0);
        }
        ++stats->evals;
    }
    std::array<std::uint8_t, kStackWidth> sa, sb;
    Bits ha, hb; // heap fallback for very wide oracles
    std::uint8_t* bufs[2] = {sa.data(), sb.data()};
    if (static_cast<std::size_t>(oracle.input_width) > kStackWidth) {
        ha.resize(static_cast<std::size_t>(oracle.input_width));
        hb.resize(static_cast<std::size_t>(oracle.input_width));
        bufs[0] = ha.data();
        bufs[1] = hb.data();
    }
    BitSpan cur = trace;
    double scale = 1.0;
    int which = 0;
    for (std::size_t li = 0; li < oracle.layers.size(); ++li) {
        const LiftedLayer& layer = oracle.layers[li];
        std::size_t out_len = 0;
        LayerOutcome o = apply_qp_layer(layer, cur, bufs[which], out_len, stream);
        if (o.overflow) {
            if (stats != nullptr) ++stats->layer_overflows[li];
            return 0.0;
        }
        scale *= layer.gamma_pow * o.sign;
        cur = BitSpan(bufs[which], out_len);
        which ^= 1;
    }
    return oracle.base.eval(cur, &stream) * scale;
}

} // namespace

double eval_qp(const QPOracle& oracle, BitSpan trace, Stream& stream) {
    return eval_qp_impl(oracle, trace, stream, nullptr);
}

double eval_qp(const QPOracle& oracle, BitSpan trace, Stream& stream, EvalStats& stats) {
    return eval_qp_impl(oracle, trace, stream, &stats);
}

} // namespace qpt
