#include "qpt/kmer.hpp"

#include "qpt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace qpt {

OracleFn marker_indicator(const Bits& w) {
    if (w.empty()) throw std::invalid_argument("marker_indicator: empty marker");
    OracleFn f;
    f.k = static_cast<int>(w.size());
    f.bound = 1.0;
    f.deterministic = true;
    f.marker = w;
    f.eval = [w](BitSpan s, Stream*) -> double {
        if (s.size() < w.size()) return 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (s[i] != w[i]) return 0.0;
        }
        return 1.0;
    };
    return f;
}

std::complex<double> exact_kmer_value(BitSpan x, BitSpan w, std::complex<double> zeta) {
    if (w.empty()) throw std::invalid_argument("exact_kmer_value: empty marker");
    if (w.size() > x.size()) {
        throw std::invalid_argument("exact_kmer_value: marker longer than the string");
    }
    std::complex<double> acc{0.0, 0.0};
    std::complex<double> zp{1.0, 0.0}; // zeta^l, zero-based l
    for (std::size_t l = 0; l + w.size() <= x.size(); ++l) {
        bool match = true;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (x[l + i] != w[i]) {
                match = false;
                break;
            }
        }
        if (match) acc += zp;
        zp *= zeta;
    }
    return acc;
}

namespace {

using Cplx = std::complex<double>;

struct SuffixAccum {
    std::vector<double> sum;   // per suffix j (index 0 <-> j = 1)
    std::vector<double> sumsq; // of the same samples
};

// Evaluates the lifted oracle over every suffix of traces [begin, end) and
// accumulates per-suffix sums in trace-index order.
void accumulate_chunk(const std::vector<Bits>& traces, std::size_t begin, std::size_t end,
                      const QPOracle& oracle, std::uint64_t seed, std::uint64_t marker_pack,
                      SuffixAccum& acc) {
    for (std::size_t t = begin; t < end; ++t) {
        const Bits& trace = traces[t];
        // Suffixes beyond the trace end are empty and evaluate to exactly 0
        // (the base indicator needs at least one symbol), so they are
        // skipped; the mean still divides by the full trace count.
        for (std::size_t j = 1; j <= trace.size(); ++j) {
            Stream st(derive_key({seed, TAG_KMER, marker_pack, t, j}));
            double v = eval_qp(oracle, BitSpan(trace.data() + (j - 1), trace.size() - (j - 1)),
                               st);
            acc.sum[j - 1] += v;
            acc.sumsq[j - 1] += v * v;
        }
    }
}

// Runs the chunked, worker-count-independent suffix-mean pass for one marker.
KmerSweep run_suffix_sweep(const std::vector<Bits>& traces, const CompositeChannel& split,
                           const Bits& marker, double eps, std::uint64_t seed, int threads,
                           std::size_t maxlen) {
    QPOracle oracle = lift_composite(marker_indicator(marker), split, eps);

    const std::uint64_t marker_pack = pack_bits(marker);
    const std::size_t n = traces.size();
    constexpr std::size_t kChunk = 4096; // fixed reduction unit -> worker-count independence
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;

    std::vector<SuffixAccum> partial(n_chunks);
    for (SuffixAccum& a : partial) {
        a.sum.assign(maxlen, 0.0);
        a.sumsq.assign(maxlen, 0.0);
    }

    auto run_chunks = [&](std::size_t chunk_begin, std::size_t chunk_end) {
        for (std::size_t c = chunk_begin; c < chunk_end; ++c) {
            accumulate_chunk(traces, c * kChunk, std::min(n, (c + 1) * kChunk), oracle, seed,
                             marker_pack, partial[c]);
        }
    };
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(n_chunks, 1));
    if (workers <= 1 || n_chunks <= 1) {
        run_chunks(0, n_chunks);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        // Contiguous chunk ranges per worker; the reduction below walks
        // chunks in index order, so the split has no observable effect.
        for (std::size_t wk = 0; wk < workers; ++wk) {
            std::size_t lo = n_chunks * wk / workers;
            std::size_t hi = n_chunks * (wk + 1) / workers;
            pool.emplace_back(run_chunks, lo, hi);
        }
        for (std::thread& th : pool) th.join();
    }

    KmerSweep sweep;
    sweep.marker = marker;
    sweep.gamma_total = oracle.total_gamma;
    sweep.k_prime = oracle.input_width;
    sweep.means.assign(maxlen, 0.0);
    sweep.sds.assign(maxlen, 0.0);
    const double dn = static_cast<double>(n);
    for (std::size_t j = 0; j < maxlen; ++j) {
        double s = 0.0, s2 = 0.0;
        for (const SuffixAccum& a : partial) {
            s += a.sum[j];
            s2 += a.sumsq[j];
        }
        double mean = s / dn;
        sweep.means[j] = mean;
        sweep.sds[j] = std::sqrt(std::max(0.0, s2 / dn - mean * mean));
    }
    return sweep;
}

// Canonical block structure of the channel: every composite of the three
// stage kinds maps each input bit independently to one contiguous output
// block, and the shapes below admit a closed-form inversion of the suffix
// transform.
enum class MapShape {
    simple,  // canonical [sym?] [del?] [ins?]: block = (geometric junk run
             // attached to the kept bit) or empty; covers the identity,
             // pure-deletion, pure-insertion, and deletion-then-insertion
             // pipelines
    ins_del, // canonical [sym?] [ins] [del]: junk gaps survive even when the
             // bit is deleted, so junk-only blocks occur
    general, // anything else: no closed-form inversion implemented
};

struct MapParams {
    MapShape shape = MapShape::simple;
    double delta = 0.0; // merged deletion rate of the block structure
    double q = 0.0;     // geometric ratio of the junk-gap law
};

MapParams classify_mapping(const CompositeChannel& chan) {
    CompositeChannel canon = canonicalize_channel(chan);
    std::vector<ChannelSpec> seq;
    for (const ChannelSpec& s : canon.stages) {
        if (s.kind != ChannelKind::symmetry) seq.push_back(s); // flips do not move symbols
    }
    MapParams p;
    if (seq.empty()) return p;
    if (seq.size() == 1) {
        if (seq[0].kind == ChannelKind::deletion) {
            p.delta = seq[0].param;
        } else {
            p.q = seq[0].param;
        }
        return p;
    }
    if (seq.size() == 2 && seq[0].kind == ChannelKind::deletion &&
        seq[1].kind == ChannelKind::insertion) {
        p.delta = seq[0].param;
        p.q = seq[1].param;
        return p;
    }
    if (seq.size() == 2 && seq[0].kind == ChannelKind::insertion &&
        seq[1].kind == ChannelKind::deletion) {
        const double eta = seq[0].param;
        const double delta = seq[1].param;
        p.shape = MapShape::ins_del;
        p.delta = delta;
        // Junk gaps are geometric runs thinned by the deletion: still
        // geometric, with ratio eta (1 - delta) / (1 - eta delta).
        p.q = eta * (1.0 - delta) / (1.0 - eta * delta);
        return p;
    }
    p.shape = MapShape::general;
    return p;
}

// One marker level of the shape inversion: the corrected occurrence-sum
// estimate plus the first-suffix mean (the full-trace inversion of the
// marker indicator) and propagated spread/bias accounting.
struct LevelResult {
    Cplx S{0.0, 0.0};    // estimate of sum_l zeta^l 1[match at l]
    double se = 0.0;     // propagated sampling-spread proxy
    double bias = 0.0;   // propagated worst-case lift bias
    double mu1 = 0.0;    // first suffix mean
    double se_mu1 = 0.0; // its spread proxy
};

LevelResult run_level(const KmerPlan& plan, std::size_t level, Cplx z, Cplx zeta,
                      const MapParams& map) {
    const KmerSweep& sweep = plan.sweeps.at(level);
    LevelResult out;

    const double root_n = std::sqrt(static_cast<double>(plan.n_traces));
    Cplx v{0.0, 0.0};
    Cplx zp{1.0, 0.0};
    double se_v = 0.0;
    double zmag_pow = 1.0;
    double zmag_sum = 0.0; // sum_j |z|^j, for the bias budget
    const double zmag = std::abs(z);
    for (std::size_t j = 0; j < plan.maxlen; ++j) {
        zp *= z; // z^(j+1): suffix indices are one-based
        v += sweep.means[j] * zp;
        zmag_pow *= zmag;
        se_v += zmag_pow * sweep.sds[j];
        zmag_sum += zmag_pow;
    }
    se_v /= root_n;
    const double bias_v = plan.eps * zmag_sum;
    out.mu1 = plan.maxlen > 0 ? sweep.means[0] : 0.0;
    out.se_mu1 = plan.maxlen > 0 ? sweep.sds[0] / root_n : 0.0;
    const double bias_mu1 = plan.eps;

    const double delta = map.delta;
    const double q = map.q;
    const Cplx w = z / (1.0 - q * z); // junk-run factor; z when q = 0
    const double wmag = std::abs(w);

    if (map.shape == MapShape::simple) {
        // V = W ((1 - d/zeta) S + (d/zeta) mu_1)
        const Cplx dz = delta / zeta;
        const Cplx denom = 1.0 - dz;
        out.S = (v / w - dz * out.mu1) / denom;
        const double dmag = std::abs(denom);
        out.se = (se_v / wmag + std::abs(dz) * out.se_mu1) / dmag;
        out.bias = (bias_v / wmag + std::abs(dz) * bias_mu1) / dmag;
        return out;
    }

    // MapShape::ins_del. Junk-only blocks make the identity carry the
    // one-bit-truncated marker's occurrence sum S2:
    //   V/W = S - c1 (S - mu_1) - c2 (S2 - h1 + zeta^n [k = 1])
    // with c1 = B (1-q)(1-delta), c2 = B q / 2, B = d (1-q) / ((1-d+qd) zeta);
    // h1 is the truncated marker's full-trace mean. A uniform junk bit
    // prepended to a suffix splits evenly over both one-bit extensions of
    // the truncated marker, which is where the q/2 comes from.
    const Cplx B = delta * (1.0 - q) / ((1.0 - delta + q * delta) * zeta);
    const Cplx c1 = B * (1.0 - q) * (1.0 - delta);
    const Cplx c2 = B * (q / 2.0);
    const Cplx denom = 1.0 - c1;

    const std::size_t level_marker_size = plan.marker.size() - level;
    Cplx t2{0.0, 0.0};
    double se_t2 = 0.0;
    double bias_t2 = 0.0;
    if (level_marker_size >= 2) {
        LevelResult sub = run_level(plan, level + 1, z, zeta, map);
        t2 = sub.S - sub.mu1;
        se_t2 = sub.se + sub.se_mu1;
        bias_t2 = sub.bias + plan.eps;
    } else {
        // Empty truncated marker: every one of the n positions matches, so
        // S2 is the plain geometric series, h1 = 1, and the end-of-string
        // term zeta^n survives.
        const long long n_len = std::max<long long>(plan.n_hat, 0);
        Cplx geo{0.0, 0.0};
        Cplx zl{1.0, 0.0};
        for (long long l = 0; l < n_len; ++l) {
            geo += zl;
            zl *= zeta;
        }
        t2 = geo - 1.0 + zl; // zl = zeta^n after the loop
    }

    out.S = (v / w - c1 * out.mu1 + c2 * t2) / denom;
    const double dmag = std::abs(denom);
    out.se = (se_v / wmag + std::abs(c1) * out.se_mu1 + std::abs(c2) * se_t2) / dmag;
    out.bias = (bias_v / wmag + std::abs(c1) * bias_mu1 + std::abs(c2) * bias_t2) / dmag;
    return out;
}

} // namespace

KmerPlan plan_kmer(const std::vector<Bits>& traces, const CompositeChannel& chan,
                   const Bits& marker, double eps, std::uint64_t seed, int threads) {
    if (traces.empty()) throw std::invalid_argument("plan_kmer: empty trace set");
    if (marker.empty()) throw std::invalid_argument("plan_kmer: empty marker");
    if (threads < 1) threads = 1;

    const CompositeChannel split = split_channel(chan, 1.0 / 3.0);

    KmerPlan plan;
    plan.marker = marker;
    plan.chan = chan;
    plan.eps = eps;
    plan.n_traces = traces.size();
    for (const Bits& t : traces) plan.maxlen = std::max(plan.maxlen, t.size());

    const MapParams map = classify_mapping(chan);
    plan.mapping_exact = map.shape != MapShape::general;

    // The truncated-marker recursion of the insertion-then-deletion shape
    // needs one sweep per level; every other shape needs only the marker's.
    const std::size_t levels = map.shape == MapShape::ins_del ? marker.size() : 1;
    plan.sweeps.reserve(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        Bits level_marker(marker.begin() + static_cast<std::ptrdiff_t>(l), marker.end());
        plan.sweeps.push_back(
            run_suffix_sweep(traces, split, level_marker, eps, seed, threads, plan.maxlen));
    }

    if (map.shape == MapShape::ins_del) {
        double total_len = 0.0;
        for (const Bits& t : traces) total_len += static_cast<double>(t.size());
        const double rate = gf_derivative_at_one(composite_gf(chan));
        plan.n_hat = std::llround(total_len / static_cast<double>(traces.size()) / rate);
    }
    return plan;
}

KmerEstimate estimate_kmer_at(const KmerPlan& plan, double alpha) {
    if (!(alpha >= -3.14159265358979323846 && alpha <= 3.14159265358979323846)) {
        throw std::invalid_argument("estimate_kmer_at: alpha outside [-pi, pi]");
    }
    if (plan.sweeps.empty()) throw std::invalid_argument("estimate_kmer_at: empty plan");

    const Cplx z = inverse_gf_eval(plan.chan, alpha);
    const Cplx zeta = alpha == 0.0 ? Cplx{1.0, 0.0} : std::polar(1.0, alpha);
    const MapParams map = classify_mapping(plan.chan);

    KmerEstimate est;
    est.n_traces = plan.n_traces;
    est.alpha = alpha;
    est.z_used = z;
    est.n_hat = plan.n_hat;
    est.gamma_total = plan.sweeps[0].gamma_total;
    est.k_prime = plan.sweeps[0].k_prime;
    est.per_suffix_means = plan.sweeps[0].means;
    est.per_suffix_sds = plan.sweeps[0].sds;

    if (map.shape == MapShape::general) {
        // No closed-form inversion for this stage order: fall back to the
        // raw combination zeta^{-1} V and say so in mapping_exact.
        Cplx v{0.0, 0.0};
        Cplx zp{1.0, 0.0};
        double zmag_pow = 1.0, zmag_sum = 0.0;
        const double zmag = std::abs(z);
        for (std::size_t j = 0; j < plan.maxlen; ++j) {
            zp *= z;
            v += plan.sweeps[0].means[j] * zp;
            zmag_pow *= zmag;
            zmag_sum += zmag_pow;
        }
        est.value = v / zeta;
        est.mapping_exact = false;
        est.stderr_proxy = est.n_traces >= 2 ? kmer_stderr(est) : 0.0;
        est.bias_budget = plan.eps * zmag_sum;
        return est;
    }

    LevelResult top = run_level(plan, 0, z, zeta, map);
    est.value = top.S;
    est.mapping_exact = true;
    est.stderr_proxy = est.n_traces >= 2 ? top.se : 0.0;
    est.bias_budget = top.bias;
    return est;
}

KmerEstimate estimate_kmer(const std::vector<Bits>& traces, const CompositeChannel& chan,
                           const KmerQuery& query, std::uint64_t seed, int threads) {
    if (!(query.alpha >= -3.14159265358979323846 && query.alpha <= 3.14159265358979323846)) {
        throw std::invalid_argument("estimate_kmer: alpha outside [-pi, pi]");
    }
    const KmerPlan plan = plan_kmer(traces, chan, query.marker, query.eps, seed, threads);
    return estimate_kmer_at(plan, query.alpha);
}

double kmer_stderr(const KmerEstimate& est) {
    if (est.n_traces < 2) throw std::invalid_argument("kmer_stderr: needs at least 2 traces");
    if (est.per_suffix_sds.size() != est.per_suffix_means.size()) {
        throw std::invalid_argument("kmer_stderr: estimate lacks per-suffix spreads");
    }
    const double root_n = std::sqrt(static_cast<double>(est.n_traces));
    const double zmag = std::abs(est.z_used);
    double acc = 0.0;
    double zp = 1.0;
    for (double sd : est.per_suffix_sds) {
        zp *= zmag;
        acc += zp * sd;
    }
    return acc / root_n;
}

} // namespace qpt
