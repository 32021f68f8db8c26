#include "qpt/exact_oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace qpt {

PackedU PackedU::from_bits(BitSpan x) {
    if (x.size() > 63) throw std::runtime_error("packed string exceeds 63 symbols");
    PackedU s;
    s.len = static_cast<std::uint32_t>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i]) s.bits |= std::uint64_t{1} << i;
    }
    return s;
}

void PackedU::append(int sym) {
    if (len >= 63) throw std::runtime_error("packed string exceeds 63 symbols");
    if (sym == 2) {
        umask |= std::uint64_t{1} << len;
    } else if (sym == 1) {
        bits |= std::uint64_t{1} << len;
    }
    ++len;
}

PackedU PackedU::prefix(std::uint32_t n) const {
    if (n >= len) return *this;
    PackedU p;
    p.len = n;
    std::uint64_t keep = (std::uint64_t{1} << n) - 1;
    p.bits = bits & keep;
    p.umask = umask & keep;
    return p;
}

std::uint32_t PackedU::u_count() const {
    return static_cast<std::uint32_t>(__builtin_popcountll(umask));
}

std::string format_packed(const PackedU& s) {
    std::string out;
    out.reserve(s.len);
    for (std::uint32_t i = 0; i < s.len; ++i) {
        int sym = s.symbol(i);
        out.push_back(sym == 2 ? 'U' : static_cast<char>('0' + sym));
    }
    return out;
}

namespace {

struct WorkCtx {
    const ExactBudget* budget;
    std::size_t work = 0;
    void charge(std::size_t n) {
        work += n;
        if (work > budget->max_work) {
            throw std::runtime_error(
                "exact engine work budget exceeded (reduce |x|, stage count, or window)");
        }
    }
};

void add_mass(SignedDist& d, const PackedU& key, double w) {
    if (w == 0.0) return;
    d[key] += w;
}

const double* binom_row(int n) {
    // Pascal's triangle in doubles (exact through n = 56, relative error
    // ~1e-16 beyond; only ever multiplied into double-precision weights).
    static const std::vector<std::vector<double>> table = [] {
        std::vector<std::vector<double>> t(256);
        for (int n = 0; n < 256; ++n) {
            t[n].assign(static_cast<std::size_t>(n) + 1, 1.0);
            for (int k = 1; k < n; ++k) t[n][k] = t[n - 1][k - 1] + t[n - 1][k];
        }
        return t;
    }();
    return table[static_cast<std::size_t>(n)].data();
}

/// Distribution split into strings whose end is known exactly (`main`) and
/// window-truncated strings known to continue past their last symbol
/// (`capped`), plus probability already known to be unresolvable.
struct TwoDist {
    SignedDist main;
    SignedDist capped;
    double tail = 0.0;
};

// --- channel-side stage pushforwards (probability measures) ---------------

void sym_rec(const PackedU& s, std::uint32_t i, PackedU cur, double w, double sigma,
             SignedDist& out, WorkCtx& ctx) {
    ctx.charge(1);
    if (i == s.len) {
        add_mass(out, cur, w);
        return;
    }
    int sym = s.symbol(i);
    if (sym == 2) {
        cur.append(2); // a flipped uniform bit is still uniform
        sym_rec(s, i + 1, cur, w, sigma, out, ctx);
        return;
    }
    PackedU flip = cur;
    cur.append(sym);
    sym_rec(s, i + 1, cur, w * (1.0 - sigma), sigma, out, ctx);
    flip.append(sym ^ 1);
    sym_rec(s, i + 1, flip, w * sigma, sigma, out, ctx);
}

void push_sym_stage(TwoDist& d, double sigma, WorkCtx& ctx) {
    TwoDist next;
    next.tail = d.tail;
    for (const auto& [s, w] : d.main) sym_rec(s, 0, PackedU{}, w, sigma, next.main, ctx);
    for (const auto& [s, w] : d.capped) sym_rec(s, 0, PackedU{}, w, sigma, next.capped, ctx);
    d = std::move(next);
}

void del_rec(const PackedU& s, std::uint32_t i, PackedU cur, double w, double delta,
             SignedDist& out, WorkCtx& ctx) {
    ctx.charge(1);
    if (i == s.len) {
        add_mass(out, cur, w);
        return;
    }
    int sym = s.symbol(i);
    if (sym == 2) {
        // Run of U symbols: only the kept count matters (kept uniform bits
        // are still uniform), so branch on it with binomial weights.
        std::uint32_t g = 0;
        while (i + g < s.len && s.symbol(i + g) == 2) ++g;
        const double* choose = binom_row(static_cast<int>(g));
        for (std::uint32_t m = 0; m <= g; ++m) {
            double pw = choose[m] * std::pow(1.0 - delta, static_cast<double>(m)) *
                        std::pow(delta, static_cast<double>(g - m));
            PackedU ext = cur;
            for (std::uint32_t t = 0; t < m; ++t) ext.append(2);
            del_rec(s, i + g, ext, w * pw, delta, out, ctx);
        }
        return;
    }
    del_rec(s, i + 1, cur, w * delta, delta, out, ctx); // symbol deleted
    cur.append(sym);
    del_rec(s, i + 1, cur, w * (1.0 - delta), delta, out, ctx);
}

void push_del_stage(TwoDist& d, double delta, WorkCtx& ctx) {
    TwoDist next;
    next.tail = d.tail;
    for (const auto& [s, w] : d.main) del_rec(s, 0, PackedU{}, w, delta, next.main, ctx);
    for (const auto& [s, w] : d.capped) del_rec(s, 0, PackedU{}, w, delta, next.capped, ctx);
    d = std::move(next);
}

void ins_rec(const PackedU& s, std::uint32_t i, PackedU cur, double w, double eta,
             std::uint32_t cap, bool from_capped, TwoDist& out, WorkCtx& ctx) {
    ctx.charge(1);
    if (i == s.len) {
        // Source exhausted. No trailing insertions exist, so the string
        // ends here exactly — unless the source itself was truncated.
        add_mass(from_capped ? out.capped : out.main, cur, w);
        return;
    }
    if (cur.len >= cap) {
        // Window full with at least one real symbol still to come: the
        // string definitely continues beyond the window.
        add_mass(out.capped, cur, w);
        return;
    }
    std::uint32_t room = cap - cur.len;
    // Geometric gap before source symbol i: P[G = g] = eta^g (1 - eta).
    double pw = (1.0 - eta) * w;
    PackedU ext = cur;
    for (std::uint32_t g = 0; g < room; ++g) {
        if (g > 0) pw *= eta;
        PackedU with_bit = ext;
        with_bit.append(s.symbol(i));
        ins_rec(s, i + 1, with_bit, pw, eta, cap, from_capped, out, ctx);
        ext.append(2);
    }
    // Gap at least `room`: the window fills with inserted bits and the
    // string continues (symbol i is still pending beyond it).
    double lump = w * std::pow(eta, static_cast<double>(room));
    add_mass(out.capped, ext, lump);
}

void push_ins_stage(TwoDist& d, double eta, std::uint32_t cap, WorkCtx& ctx) {
    TwoDist next;
    next.tail = d.tail;
    for (const auto& [s, w] : d.main) ins_rec(s, 0, PackedU{}, w, eta, cap, false, next, ctx);
    for (const auto& [s, w] : d.capped) ins_rec(s, 0, PackedU{}, w, eta, cap, true, next, ctx);
    d = std::move(next);
}

/// Fused insertion-run-then-deletion stage, in closed form. Feeding a
/// string through Insertion_eta1, ..., Insertion_etaR and then
/// Deletion_delta is equivalent to: each source symbol survives
/// independently with probability 1 - delta, and an independent "thinned
/// compound gap" of uniform bits precedes each source position; gaps of
/// deleted symbols merge into the next emitted block (or into a trailing
/// block after a deleted suffix). The gap law has no simple closed form
/// for runs of length > 1, so its pmf -- and the pmfs of c-fold sums for
/// merged blocks -- are tabulated exactly up to the emission window. This
/// avoids ever enumerating an insertion stage's output at a later deletion
/// stage's inflated input window.
double negbin_pmf(std::uint32_t c, std::uint32_t g, double q) {
    if (c == 0) return g == 0 ? 1.0 : 0.0;
    return binom_row(static_cast<int>(g + c - 1))[c - 1] *
           std::pow(1.0 - q, static_cast<double>(c)) * std::pow(q, static_cast<double>(g));
}

struct GapTables {
    // conv[c][g] = P[sum of c iid thinned compound gaps = g], g < cap.
    std::vector<std::vector<double>> conv;
    // Unthinned compound-gap mass beyond the construction window; gaps that
    // long are conservatively treated as overflowing the emission window.
    double build_tail = 0.0;
};

GapTables build_gap_tables(const std::vector<double>& etas, double delta, std::uint32_t cap,
                           std::uint32_t cmax) {
    constexpr int kWindow = 256; // unthinned compound-gap support kept
    // Unthinned compound gap across the insertion run, composed left to
    // right: appending a stage with rate eta maps a gap of a symbols to
    // B_0 + sum_{j<=a} (1 + B_j) with B_* iid Geom(eta) (a fresh gap lands
    // before each existing gap symbol and before the source symbol).
    std::vector<double> g(kWindow, 0.0);
    {
        double p = 1.0 - etas[0];
        for (int m = 0; m < kWindow; ++m) {
            g[static_cast<std::size_t>(m)] = p;
            p *= etas[0];
        }
    }
    for (std::size_t s = 1; s < etas.size(); ++s) {
        std::vector<double> h(kWindow, 0.0);
        for (int m = 0; m < kWindow; ++m) {
            double acc = 0.0;
            for (int a = 0; a <= m; ++a) {
                double pa = g[static_cast<std::size_t>(a)];
                if (pa != 0.0) {
                    acc += pa * negbin_pmf(static_cast<std::uint32_t>(a) + 1,
                                           static_cast<std::uint32_t>(m - a), etas[s]);
                }
            }
            h[static_cast<std::size_t>(m)] = acc;
        }
        g = std::move(h);
    }
    GapTables out;
    double total = 0.0;
    for (double v : g) total += v;
    out.build_tail = std::max(0.0, 1.0 - total);
    // Thin: each gap bit survives the deletion independently.
    std::vector<double> keep_pow(cap, 1.0), del_pow(kWindow, 1.0);
    for (std::uint32_t m = 1; m < cap; ++m) keep_pow[m] = keep_pow[m - 1] * (1.0 - delta);
    for (int v = 1; v < kWindow; ++v) {
        del_pow[static_cast<std::size_t>(v)] = del_pow[static_cast<std::size_t>(v - 1)] * delta;
    }
    std::vector<double> t(cap, 0.0);
    for (std::uint32_t m = 0; m < cap; ++m) {
        double acc = 0.0;
        for (int v = static_cast<int>(m); v < kWindow; ++v) {
            acc += g[static_cast<std::size_t>(v)] * binom_row(v)[m] *
                   del_pow[static_cast<std::size_t>(v - static_cast<int>(m))];
        }
        t[m] = acc * keep_pow[m];
    }
    out.conv.assign(cmax + 2, std::vector<double>(cap, 0.0));
    out.conv[0][0] = 1.0;
    for (std::size_t c = 1; c < out.conv.size(); ++c) {
        for (std::uint32_t a = 0; a < cap; ++a) {
            double pa = out.conv[c - 1][a];
            if (pa == 0.0) continue;
            for (std::uint32_t b = 0; a + b < cap; ++b) out.conv[c][a + b] += pa * t[b];
        }
    }
    return out;
}

struct FusedCtx {
    double delta;
    const GapTables* gaps;
    std::uint32_t cap;
    bool from_capped;
    TwoDist* out;
    WorkCtx* work;
};

void fused_rec(const FusedCtx& f, const PackedU& s, std::uint32_t i, std::uint32_t c, PackedU cur,
               double w) {
    f.work->charge(1);
    if (w == 0.0) return;
    if (cur.len >= f.cap) { // window full; resolution never looks past it
        add_mass(f.out->capped, cur, w);
        return;
    }
    const std::uint32_t room = f.cap - cur.len;
    if (i == s.len) {
        if (f.from_capped) { // unknown continuation ended inside the window
            f.out->tail += std::abs(w);
            return;
        }
        // Trailing block: merged gaps of a deleted suffix.
        const std::vector<double>& pmf = f.gaps->conv[c];
        double below = 0.0;
        PackedU ext = cur;
        for (std::uint32_t g = 0; g < room; ++g) {
            below += pmf[g];
            add_mass(f.out->main, ext, w * pmf[g]);
            ext.append(2);
        }
        add_mass(f.out->capped, ext, w * (1.0 - below));
        return;
    }
    // Symbol i deleted: its gap merges into the next block.
    fused_rec(f, s, i + 1, c + 1, cur, w * f.delta);
    // Symbol i survives behind a block of c + 1 merged gaps.
    const std::vector<double>& pmf = f.gaps->conv[c + 1];
    double keep = w * (1.0 - f.delta);
    double below = 0.0;
    PackedU ext = cur;
    for (std::uint32_t g = 0; g < room; ++g) {
        below += pmf[g];
        PackedU with_bit = ext;
        with_bit.append(s.symbol(i));
        fused_rec(f, s, i + 1, 0, with_bit, keep * pmf[g]);
        ext.append(2);
    }
    add_mass(f.out->capped, ext, keep * (1.0 - below));
}

void push_fused_run(TwoDist& d, const std::vector<double>& etas, double delta, std::uint32_t cap,
                    WorkCtx& ctx) {
    std::uint32_t maxlen = 0;
    double in_mass = 0.0;
    for (const auto& [s, w] : d.main) {
        maxlen = std::max(maxlen, s.len);
        in_mass += std::abs(w);
    }
    for (const auto& [s, w] : d.capped) {
        maxlen = std::max(maxlen, s.len);
        in_mass += std::abs(w);
    }
    GapTables gaps = build_gap_tables(etas, delta, std::max(cap, 1u), maxlen + 2);
    TwoDist next;
    next.tail = d.tail;
    // Gaps longer than the construction window may be misclassified as
    // overflowing; at most one gap block per position plus the trailing one.
    next.tail += gaps.build_tail * static_cast<double>(maxlen + 1) * in_mass;
    FusedCtx f{delta, &gaps, cap, false, &next, &ctx};
    for (const auto& [s, w] : d.main) fused_rec(f, s, 0, 0, PackedU{}, w);
    f.from_capped = true;
    for (const auto& [s, w] : d.capped) fused_rec(f, s, 0, 0, PackedU{}, w);
    d = std::move(next);
}

/// Smallest W such that W independent keep-with-probability-(1 - delta)
/// trials produce at least `target` survivors except with probability
/// below 1e-13. Sizes the enumeration window an insertion stage must emit
/// for a later deletion stage to resolve its output window.
int deletion_input_cap(int target, double delta) {
    if (target <= 0) return 0;
    const double p = 1.0 - delta;
    for (int w = target; w <= 63; ++w) {
        const double* choose = binom_row(w);
        double below = 0.0;
        for (int m = 0; m < target; ++m) {
            below += choose[m] * std::pow(p, static_cast<double>(m)) *
                     std::pow(delta, static_cast<double>(w - m));
        }
        if (below < 1e-13) return w;
    }
    throw std::runtime_error(
        "exact engine: required enumeration window exceeds 63 symbols (reduce the window or "
        "deletion rates)");
}

ExactDist resolve_prefix(TwoDist&& d, std::uint32_t width) {
    ExactDist out;
    out.tail = d.tail;
    for (const auto& [s, w] : d.main) add_mass(out.mass, s.prefix(width), w);
    for (const auto& [s, w] : d.capped) {
        if (s.len >= width) {
            add_mass(out.mass, s.prefix(width), w);
        } else {
            out.tail += std::abs(w); // truncated string ended inside the window: unresolved
        }
    }
    return out;
}

void check_channel_args(BitSpan x, const CompositeChannel& chan, const ExactBudget& budget) {
    if (chan.stages.empty()) throw std::invalid_argument("exact engine: empty channel");
    if (static_cast<int>(chan.stages.size()) > budget.max_stages) {
        throw std::runtime_error("exact engine: stage count exceeds budget");
    }
    if (static_cast<int>(x.size()) > budget.max_input) {
        throw std::runtime_error("exact engine: input length exceeds budget");
    }
}

} // namespace

namespace {

enum class OpKind { del, ins, sym, fused_ins_del };

struct StageOp {
    OpKind kind;
    double param = 0.0;        // delta, eta, or sigma
    double fused_delta = 0.0;  // fused: the merged deletion rate
    std::vector<double> etas;  // fused: insertion-run rates, in order
    std::uint32_t cap = 0;     // emission window for ins / fused ops
};

} // namespace

ExactDist trace_prefix_distribution(BitSpan x, const CompositeChannel& chan, int width,
                                    const ExactBudget& budget) {
    check_channel_args(x, chan, budget);
    if (width < 0) throw std::invalid_argument("trace_prefix_distribution: negative width");
    WorkCtx ctx{&budget};

    // Canonicalize first (leading symmetry stage, merged deletions, zero-rate
    // stages dropped): the trace distribution is unchanged but far more
    // channels become cheap to enumerate.
    CompositeChannel canon = canonicalize_channel(chan);
    double sigma_acc = 0.0;
    bool has_sym = false;
    std::vector<ChannelSpec> seq; // insertion/deletion stages in order
    for (const ChannelSpec& spec : canon.stages) {
        if (spec.kind == ChannelKind::symmetry) {
            sigma_acc = spec.param;
            has_sym = true;
        } else {
            seq.push_back(spec);
        }
    }

    // Fuse each maximal insertion run followed by a deletion into one
    // closed-form op. After canonicalization plus run fusion, deletions can
    // only appear as the very first op, so no deletion ever consumes an
    // unbounded-length (insertion-fed) input.
    std::vector<StageOp> ops;
    if (has_sym) {
        StageOp op;
        op.kind = OpKind::sym;
        op.param = sigma_acc;
        ops.push_back(std::move(op));
    }
    for (std::size_t t = 0; t < seq.size();) {
        if (seq[t].kind == ChannelKind::insertion) {
            std::vector<double> run;
            while (t < seq.size() && seq[t].kind == ChannelKind::insertion) {
                run.push_back(seq[t++].param);
            }
            if (t < seq.size() && seq[t].kind == ChannelKind::deletion) {
                StageOp op;
                op.kind = OpKind::fused_ins_del;
                op.fused_delta = seq[t++].param;
                op.etas = std::move(run);
                ops.push_back(std::move(op));
            } else { // trailing run: nothing left that could delete its output
                for (double eta : run) {
                    StageOp op;
                    op.kind = OpKind::ins;
                    op.param = eta;
                    ops.push_back(std::move(op));
                }
            }
        } else {
            StageOp op;
            op.kind = OpKind::del;
            op.param = seq[t++].param;
            ops.push_back(std::move(op));
        }
    }

    // Size each emitting op's window, walking backward from the requested
    // width; a later (unfused) deletion stage would inflate the need, but
    // canonicalization guarantees none can follow an emitting op. The
    // chooser branch stays as a safety net for that invariant.
    bool emits_before = false;
    std::vector<bool> unbounded_before(ops.size(), false);
    for (std::size_t t = 0; t < ops.size(); ++t) {
        unbounded_before[t] = emits_before;
        if (ops[t].kind == OpKind::ins || ops[t].kind == OpKind::fused_ins_del) {
            emits_before = true;
        }
    }
    long long need = width;
    for (std::size_t t = ops.size(); t-- > 0;) {
        StageOp& op = ops[t];
        if (op.kind == OpKind::sym) continue;
        if (op.kind == OpKind::ins || op.kind == OpKind::fused_ins_del) {
            if (need > 63) {
                throw std::runtime_error(
                    "exact engine: required enumeration window exceeds 63 symbols");
            }
            op.cap = static_cast<std::uint32_t>(need);
        }
        const bool deletes = op.kind == OpKind::del || op.kind == OpKind::fused_ins_del;
        if (deletes && unbounded_before[t]) {
            if (need > 63) {
                throw std::runtime_error(
                    "exact engine: required enumeration window exceeds 63 symbols");
            }
            double delta = op.kind == OpKind::del ? op.param : op.fused_delta;
            need = deletion_input_cap(static_cast<int>(need), delta);
        }
    }

    TwoDist d;
    d.main[PackedU::from_bits(x)] = 1.0;
    for (const StageOp& op : ops) {
        switch (op.kind) {
        case OpKind::del: push_del_stage(d, op.param, ctx); break;
        case OpKind::ins: push_ins_stage(d, op.param, op.cap, ctx); break;
        case OpKind::sym: push_sym_stage(d, op.param, ctx); break;
        case OpKind::fused_ins_del:
            push_fused_run(d, op.etas, op.fused_delta, op.cap, ctx);
            break;
        }
        ctx.charge(d.main.size() + d.capped.size());
    }
    return resolve_prefix(std::move(d), static_cast<std::uint32_t>(width));
}

namespace {

// --- concrete full-output enumeration (inserted bits expanded) ------------

void concrete_ins_rec(const PackedU& s, std::uint32_t i, PackedU cur, double w, double eta,
                      std::uint32_t max_len, SignedDist& out, double& tail, WorkCtx& ctx) {
    ctx.charge(1);
    if (i == s.len) {
        add_mass(out, cur, w);
        return;
    }
    if (cur.len >= max_len) {
        tail += w; // at least one more symbol must follow
        return;
    }
    PackedU with_bit = cur;
    with_bit.append(s.symbol(i));
    concrete_ins_rec(s, i + 1, with_bit, w * (1.0 - eta), eta, max_len, out, tail, ctx);
    PackedU with_zero = cur;
    with_zero.append(0);
    concrete_ins_rec(s, i, with_zero, w * eta * 0.5, eta, max_len, out, tail, ctx);
    cur.append(1);
    concrete_ins_rec(s, i, cur, w * eta * 0.5, eta, max_len, out, tail, ctx);
}

} // namespace

ExactDist channel_output_distribution(BitSpan x, const CompositeChannel& chan, int max_len,
                                      const ExactBudget& budget) {
    check_channel_args(x, chan, budget);
    if (max_len < 0 || max_len > 63) {
        throw std::invalid_argument("channel_output_distribution: max_len must be in [0, 63]");
    }
    WorkCtx ctx{&budget};
    ExactDist d;
    d.mass[PackedU::from_bits(x)] = 1.0;
    for (const ChannelSpec& spec : chan.stages) {
        SignedDist next;
        double tail = d.tail;
        for (const auto& [s, w] : d.mass) {
            switch (spec.kind) {
            case ChannelKind::deletion: del_rec(s, 0, PackedU{}, w, spec.param, next, ctx); break;
            case ChannelKind::insertion:
                concrete_ins_rec(s, 0, PackedU{}, w, spec.param,
                                 static_cast<std::uint32_t>(max_len), next, tail, ctx);
                break;
            case ChannelKind::symmetry: sym_rec(s, 0, PackedU{}, w, spec.param, next, ctx); break;
            }
        }
        d.mass = std::move(next);
        d.tail = tail;
        ctx.charge(d.mass.size());
    }
    return d;
}

namespace {

// --- quasi-probability layer pushforwards (signed measures) ---------------

/// Truncated weight sums for a deletion layer: T[r][b] is the sum of
/// prod_i q_{j_i} over all draw vectors (j_1..j_r) with total at most b,
/// where q_j = q0 * rho^j are the layer's signed inverse weights. Satisfies
/// T[r][b] = q0*T[r-1][b] + rho*T[r][b-1].
std::vector<std::vector<double>> weight_sums(int k, int budget, double q0, double rho) {
    std::vector<std::vector<double>> t(static_cast<std::size_t>(k) + 1);
    t[0].assign(static_cast<std::size_t>(budget) + 1, 1.0);
    for (int r = 1; r <= k; ++r) {
        auto& row = t[static_cast<std::size_t>(r)];
        const auto& prev = t[static_cast<std::size_t>(r) - 1];
        row.assign(static_cast<std::size_t>(budget) + 1, 0.0);
        for (int b = 0; b <= budget; ++b) {
            double v = q0 * prev[static_cast<std::size_t>(b)];
            if (b > 0) v += rho * row[static_cast<std::size_t>(b) - 1];
            row[static_cast<std::size_t>(b)] = v;
        }
    }
    return t;
}

struct DelLayerCtx {
    const std::vector<std::vector<double>>* sums;
    const PackedU* s;
    int k;
    double q0, rho;
    SignedDist* out;
    WorkCtx* work;
};

void qp_del_rec(const DelLayerCtx& c, int i, std::uint32_t pos, int budget, PackedU cur,
                double w) {
    c.work->charge(1);
    if (i == c.k) {
        add_mass(*c.out, cur, w);
        return;
    }
    const std::uint32_t len = c.s->len;
    const auto& sums = *c.sums;
    if (pos >= len) {
        // String exhausted: every remaining draw consumes budget but emits
        // nothing; sum their weights in closed form.
        add_mass(*c.out, cur,
                 w * sums[static_cast<std::size_t>(c.k - i)][static_cast<std::size_t>(budget)]);
        return;
    }
    double qj = c.q0;
    for (int j = 0; j <= budget && pos + static_cast<std::uint32_t>(j) < len; ++j) {
        if (j > 0) qj *= c.rho;
        PackedU ext = cur;
        ext.append(c.s->symbol(pos + static_cast<std::uint32_t>(j)));
        qp_del_rec(c, i + 1, pos + static_cast<std::uint32_t>(j) + 1, budget - j, ext, w * qj);
    }
    // Draws that skip past the end: no symbol is kept, and all later draws
    // are also silent, so close the whole remainder in one sum.
    int j0 = static_cast<int>(len - pos);
    if (j0 <= budget) {
        double acc = 0.0;
        double q = c.q0 * std::pow(c.rho, static_cast<double>(j0));
        for (int j = j0; j <= budget; ++j) {
            acc += q * sums[static_cast<std::size_t>(c.k - i - 1)]
                       [static_cast<std::size_t>(budget - j)];
            q *= c.rho;
        }
        add_mass(*c.out, cur, w * acc);
    }
}

void qp_push_del(SignedDist& dist, const LiftedLayer& layer, WorkCtx& ctx) {
    const double delta = layer.stage.param;
    const double q0 = 1.0 / (1.0 - delta);
    const double rho = -delta / (1.0 - delta);
    const int k = layer.width_in;
    const int budget = layer.width_out - layer.width_in;
    auto sums = weight_sums(k, budget, q0, rho);
    SignedDist next;
    DelLayerCtx c{&sums, nullptr, k, q0, rho, &next, &ctx};
    for (const auto& [s, w] : dist) {
        c.s = &s;
        qp_del_rec(c, 0, 0, budget, PackedU{}, w);
    }
    dist = std::move(next);
}

void qp_push_ins(SignedDist& dist, const LiftedLayer& layer, WorkCtx& ctx) {
    const double eta = layer.stage.param;
    const double q0 = 1.0 / (1.0 - eta);  // keep position as-is
    const double q1 = -eta / (1.0 - eta); // insert a uniform bit
    const int k = layer.width_in;
    SignedDist next;
    for (const auto& [s, w] : dist) {
        const std::uint32_t len = std::min(s.len, static_cast<std::uint32_t>(k));
        // While source symbols remain, every step emits exactly one output
        // symbol, so the step index equals the output length; once the
        // source is exhausted the remaining positions are no-ops whose
        // signed weights sum to exactly 1.
        std::map<std::pair<std::uint32_t, PackedU>, double> level;
        level[{0, PackedU{}}] = w;
        while (!level.empty()) {
            std::map<std::pair<std::uint32_t, PackedU>, double> nxt;
            for (const auto& [key, lw] : level) {
                ctx.charge(1);
                const auto& [src, cur] = key;
                if (src >= len || cur.len >= static_cast<std::uint32_t>(k)) {
                    add_mass(next, cur, lw);
                    continue;
                }
                PackedU ext = cur;
                ext.append(2); // inserted uniform bit
                nxt[{src, ext}] += lw * q1;
                PackedU keep = cur;
                keep.append(s.symbol(src));
                nxt[{src + 1, keep}] += lw * q0;
            }
            level = std::move(nxt);
        }
    }
    dist = std::move(next);
}

struct SymLayerCtx {
    const PackedU* s;
    int k;
    double q0, q1;
    SignedDist* out;
    WorkCtx* work;
};

void qp_sym_rec(const SymLayerCtx& c, std::uint32_t i, PackedU cur, double w) {
    c.work->charge(1);
    const std::uint32_t len = std::min(c.s->len, static_cast<std::uint32_t>(c.k));
    if (i == len) {
        // Positions past the end of the string are no-ops with signed
        // weights summing to 1.
        add_mass(*c.out, cur, w);
        return;
    }
    int sym = c.s->symbol(i);
    if (sym == 2) {
        cur.append(2); // flipped uniform is uniform; branch weights sum to 1
        qp_sym_rec(c, i + 1, cur, w);
        return;
    }
    PackedU flip = cur;
    cur.append(sym);
    qp_sym_rec(c, i + 1, cur, w * c.q0);
    flip.append(sym ^ 1);
    qp_sym_rec(c, i + 1, flip, w * c.q1);
}

void qp_push_sym(SignedDist& dist, const LiftedLayer& layer, WorkCtx& ctx) {
    const double sigma = layer.stage.param;
    const double q0 = (1.0 - sigma) / (1.0 - 2.0 * sigma);
    const double q1 = -sigma / (1.0 - 2.0 * sigma);
    SignedDist next;
    SymLayerCtx c{nullptr, layer.width_in, q0, q1, &next, &ctx};
    for (const auto& [s, w] : dist) {
        c.s = &s;
        qp_sym_rec(c, 0, PackedU{}, w);
    }
    dist = std::move(next);
}

/// Sum f over a signed measure, averaging each U symbol over {0, 1}.
double fold_oracle(const SignedDist& dist, const OracleFn& f, WorkCtx& ctx) {
    double total = 0.0;
    Bits buf;
    for (const auto& [s, w] : dist) {
        const std::uint32_t u = s.u_count();
        if (u > 20) throw std::runtime_error("exact engine: too many unresolved uniform bits");
        ctx.charge(std::size_t{1} << u);
        buf.assign(s.len, 0);
        std::vector<std::uint32_t> upos;
        for (std::uint32_t i = 0; i < s.len; ++i) {
            int sym = s.symbol(i);
            if (sym == 2) {
                upos.push_back(i);
            } else {
                buf[i] = static_cast<std::uint8_t>(sym);
            }
        }
        double acc = 0.0;
        for (std::uint64_t a = 0; a < (std::uint64_t{1} << u); ++a) {
            for (std::uint32_t t = 0; t < u; ++t) {
                buf[upos[t]] = static_cast<std::uint8_t>(a >> t & 1u);
            }
            acc += f.eval(BitSpan(buf.data(), buf.size()), nullptr);
        }
        total += w * acc / static_cast<double>(std::uint64_t{1} << u);
    }
    return total;
}

} // namespace

ExactValue exact_expectation(const OracleFn& f, BitSpan x, const CompositeChannel& chan,
                             const ExactBudget& budget) {
    if (!f.eval) throw std::invalid_argument("exact_expectation: oracle has no evaluator");
    if (!f.deterministic) {
        throw std::invalid_argument("exact_expectation: oracle must be deterministic");
    }
    WorkCtx ctx{&budget};
    if (f.k <= 0) {
        return {f.eval(BitSpan{}, nullptr), 0.0};
    }
    ExactDist px = trace_prefix_distribution(x, chan, f.k, budget);
    ExactValue out;
    out.value = fold_oracle(px.mass, f, ctx);
    out.error_bound = px.tail * f.bound;
    return out;
}

namespace {

void check_qp_oracle(const QPOracle& oracle, const ExactBudget& budget, const char* who) {
    if (!oracle.base.eval) {
        throw std::invalid_argument(std::string(who) + ": no base oracle");
    }
    if (!oracle.base.deterministic) {
        throw std::invalid_argument(std::string(who) + ": base oracle must be deterministic");
    }
    if (oracle.base.k > budget.max_base_k) {
        throw std::runtime_error(std::string(who) + ": base window exceeds budget");
    }
    if (oracle.layers.empty()) {
        throw std::invalid_argument(std::string(who) + ": oracle has no layers");
    }
}

void qp_push_layers(SignedDist& cur, const QPOracle& oracle, WorkCtx& ctx) {
    for (const LiftedLayer& layer : oracle.layers) {
        switch (layer.stage.kind) {
        case ChannelKind::deletion: qp_push_del(cur, layer, ctx); break;
        case ChannelKind::insertion: qp_push_ins(cur, layer, ctx); break;
        case ChannelKind::symmetry: qp_push_sym(cur, layer, ctx); break;
        }
        ctx.charge(cur.size());
    }
}

} // namespace

ExactValue exact_qp_expectation(const QPOracle& oracle, BitSpan x, const CompositeChannel& chan,
                                const ExactBudget& budget) {
    check_qp_oracle(oracle, budget, "exact_qp_expectation");
    WorkCtx ctx{&budget};
    ExactDist px = trace_prefix_distribution(x, chan, oracle.input_width, budget);
    SignedDist cur = std::move(px.mass);
    qp_push_layers(cur, oracle, ctx);
    ExactValue out;
    out.value = fold_oracle(cur, oracle.base, ctx);
    out.error_bound = px.tail * oracle.bound;
    return out;
}

SignedDist exact_qp_trace_measure(const QPOracle& oracle, BitSpan trace,
                                  const ExactBudget& budget) {
    check_qp_oracle(oracle, budget, "exact_qp_trace_measure");
    WorkCtx ctx{&budget};
    std::size_t take = std::min(trace.size(), static_cast<std::size_t>(oracle.input_width));
    Bits head(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(take));
    SignedDist cur;
    cur.emplace(PackedU::from_bits(head), 1.0);
    qp_push_layers(cur, oracle, ctx);
    return cur;
}

double exact_qp_prefix_value(const QPOracle& oracle, const PackedU& prefix,
                             const ExactBudget& budget) {
    check_qp_oracle(oracle, budget, "exact_qp_prefix_value");
    WorkCtx ctx{&budget};
    SignedDist cur;
    cur.emplace(prefix.prefix(static_cast<std::uint32_t>(oracle.input_width)), 1.0);
    qp_push_layers(cur, oracle, ctx);
    return fold_oracle(cur, oracle.base, ctx);
}

double fold_measure(const SignedDist& dist, const OracleFn& f, const ExactBudget& budget) {
    if (!f.eval) throw std::invalid_argument("fold_measure: oracle has no evaluator");
    if (!f.deterministic) {
        throw std::invalid_argument("fold_measure: oracle must be deterministic");
    }
    WorkCtx ctx{&budget};
    return fold_oracle(dist, f, ctx);
}

std::vector<Bits> matrix_states(int max_len) {
    if (max_len < 0 || max_len > 20) {
        throw std::invalid_argument("matrix_states: max_len must be in [0, 20]");
    }
    std::vector<Bits> states;
    states.reserve((std::size_t{1} << (max_len + 1)) - 1);
    for (int l = 0; l <= max_len; ++l) {
        for (std::uint64_t v = 0; v < (std::uint64_t{1} << l); ++v) {
            Bits s(static_cast<std::size_t>(l));
            for (int i = 0; i < l; ++i) s[static_cast<std::size_t>(i)] = (v >> i) & 1u;
            states.push_back(std::move(s));
        }
    }
    return states;
}

std::size_t state_index(BitSpan s) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i]) v |= std::uint64_t{1} << i;
    }
    return (std::size_t{1} << s.size()) - 1 + v;
}

Matrix matrix_form(const ChannelSpec& spec, int max_len) {
    if (max_len < 0 || max_len > 8) {
        throw std::invalid_argument("matrix_form: max_len must be in [0, 8]");
    }
    std::vector<Bits> states = matrix_states(max_len);
    const std::size_t n = states.size();
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n + 1));
    CompositeChannel chan{{spec}};
    for (std::size_t xi = 0; xi < n; ++xi) {
        ExactDist d = channel_output_distribution(
            BitSpan(states[xi].data(), states[xi].size()), chan, max_len);
        for (const auto& [s, w] : d.mass) {
            Bits y(s.len);
            for (std::uint32_t i = 0; i < s.len; ++i) {
                y[i] = static_cast<std::uint8_t>(s.symbol(i));
            }
            m(static_cast<Eigen::Index>(state_index(BitSpan(y.data(), y.size()))),
              static_cast<Eigen::Index>(xi)) += w;
        }
        m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(xi)) += d.tail;
    }
    m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = 1.0; // oversize is absorbing
    return m;
}

} // namespace qpt
