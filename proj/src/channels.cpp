#include "qpt/channels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace qpt {

namespace {

void check_range(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

} // namespace

ChannelSpec ChannelSpec::deletion(double delta) {
    check_range(delta >= 0.0 && delta < 1.0, "deletion parameter must lie in [0, 1)");
    return {ChannelKind::deletion, delta};
}

ChannelSpec ChannelSpec::insertion(double eta) {
    check_range(eta >= 0.0 && eta < 1.0, "insertion parameter must lie in [0, 1)");
    return {ChannelKind::insertion, eta};
}

ChannelSpec ChannelSpec::symmetry(double sigma) {
    check_range(sigma >= 0.0 && sigma < 0.5, "symmetry parameter must lie in [0, 1/2)");
    return {ChannelKind::symmetry, sigma};
}

CompositeChannel parse_channel(std::string_view text) {
    CompositeChannel chan;
    std::size_t pos = 0;
    if (text.empty()) throw std::invalid_argument("channel spec must not be empty");
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string_view tok = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                                : comma - pos);
        std::size_t colon = tok.find(':');
        if (colon == std::string_view::npos) {
            throw std::invalid_argument("channel stage '" + std::string(tok) +
                                        "' is not of the form kind:param");
        }
        std::string_view kind = tok.substr(0, colon);
        std::string value(tok.substr(colon + 1));
        std::size_t used = 0;
        double param = 0.0;
        try {
            param = std::stod(value, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("channel stage '" + std::string(tok) +
                                        "' has a malformed parameter");
        }
        if (used != value.size() || value.empty()) {
            throw std::invalid_argument("channel stage '" + std::string(tok) +
                                        "' has a malformed parameter");
        }
        if (kind == "del") {
            chan.stages.push_back(ChannelSpec::deletion(param));
        } else if (kind == "ins") {
            chan.stages.push_back(ChannelSpec::insertion(param));
        } else if (kind == "sym") {
            chan.stages.push_back(ChannelSpec::symmetry(param));
        } else {
            throw std::invalid_argument("unknown channel kind '" + std::string(kind) +
                                        "' (expected del, ins, or sym)");
        }
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return chan;
}

std::string format_stage(const ChannelSpec& spec) {
    const char* name = spec.kind == ChannelKind::deletion    ? "del"
                       : spec.kind == ChannelKind::insertion ? "ins"
                                                             : "sym";
    // Shortest representation that parses back to the same double.
    char buf[64];
    const int head = std::snprintf(buf, sizeof buf, "%s:", name);
    const auto res = std::to_chars(buf + head, buf + sizeof buf - 1, spec.param);
    *res.ptr = '\0';
    return buf;
}

std::string format_channel(const CompositeChannel& chan) {
    std::string out;
    for (std::size_t i = 0; i < chan.stages.size(); ++i) {
        if (i) out.push_back(',');
        out += format_stage(chan.stages[i]);
    }
    return out;
}

Bits apply_channel(const ChannelSpec& spec, BitSpan x, Stream& stream) {
    Bits out;
    switch (spec.kind) {
    case ChannelKind::deletion: {
        // Each bit kept with probability 1−δ, bits visited last to first.
        out.reserve(x.size());
        for (std::size_t i = x.size(); i-- > 0;) {
            if (stream.bernoulli(1.0 - spec.param)) out.push_back(x[i]);
        }
        std::reverse(out.begin(), out.end());
        break;
    }
    case ChannelKind::insertion: {
        // Geom(1−η) uniform bits inserted before each input bit, bits visited
        // last to first. Built back to front, then reversed.
        out.reserve(x.size() * 2);
        for (std::size_t i = x.size(); i-- > 0;) {
            out.push_back(x[i]);
            std::uint64_t count = stream.geometric(1.0 - spec.param);
            for (std::uint64_t t = 0; t < count; ++t) {
                out.push_back(static_cast<std::uint8_t>(stream.next_bit()));
            }
        }
        std::reverse(out.begin(), out.end());
        break;
    }
    case ChannelKind::symmetry: {
        out.assign(x.begin(), x.end());
        for (auto& b : out) {
            if (stream.bernoulli(spec.param)) b ^= 1u;
        }
        break;
    }
    }
    return out;
}

Bits sample_trace(const CompositeChannel& chan, BitSpan x, Stream& stream) {
    if (chan.stages.empty()) throw std::invalid_argument("composite channel must be nonempty");
    Bits cur(x.begin(), x.end());
    for (const ChannelSpec& spec : chan.stages) {
        cur = apply_channel(spec, cur, stream);
    }
    return cur;
}

double merge_deletions(double d1, double d2) {
    check_range(d1 >= 0.0 && d1 < 1.0 && d2 >= 0.0 && d2 < 1.0,
                "merge_deletions: parameters must lie in [0, 1)");
    return 1.0 - (1.0 - d1) * (1.0 - d2);
}

DeletionSplit split_deletion(double delta, double delta_max) {
    check_range(delta > 0.0 && delta < 1.0, "split_deletion: delta must lie in (0, 1)");
    check_range(delta_max > 0.0 && delta_max <= 0.5,
                "split_deletion: delta_max must lie in (0, 1/2]");
    for (int levels = 1;; ++levels) {
        double delta_prime = 1.0 - std::pow(1.0 - delta, 1.0 / levels);
        if (delta_prime < delta_max) return {delta_prime, levels};
    }
}

CompositeChannel split_channel(const CompositeChannel& chan, double delta_max) {
    CompositeChannel out;
    for (const ChannelSpec& spec : chan.stages) {
        if (spec.kind == ChannelKind::deletion && spec.param >= delta_max) {
            DeletionSplit s = split_deletion(spec.param, delta_max);
            for (int i = 0; i < s.levels; ++i) {
                out.stages.push_back(ChannelSpec::deletion(s.delta_prime));
            }
        } else {
            out.stages.push_back(spec);
        }
    }
    return out;
}

CompositeChannel canonicalize_channel(const CompositeChannel& chan) {
    double sigma_acc = 0.0;
    bool has_sym = false;
    std::vector<ChannelSpec> seq;
    for (const ChannelSpec& spec : chan.stages) {
        switch (spec.kind) {
        case ChannelKind::symmetry:
            // Flip rates combine as "exactly one stage flips".
            if (spec.param > 0.0) {
                sigma_acc = sigma_acc + spec.param - 2.0 * sigma_acc * spec.param;
                has_sym = true;
            }
            break;
        case ChannelKind::deletion:
            if (spec.param > 0.0) {
                if (!seq.empty() && seq.back().kind == ChannelKind::deletion) {
                    seq.back().param = merge_deletions(seq.back().param, spec.param);
                } else {
                    seq.push_back(spec);
                }
            }
            break;
        case ChannelKind::insertion:
            if (spec.param > 0.0) seq.push_back(spec);
            break;
        }
    }
    CompositeChannel out;
    if (has_sym) out.stages.push_back(ChannelSpec::symmetry(sigma_acc));
    out.stages.insert(out.stages.end(), seq.begin(), seq.end());
    return out;
}

MobiusGF length_gf(const ChannelSpec& spec) {
    switch (spec.kind) {
    case ChannelKind::deletion:
        return {1.0 - spec.param, spec.param, 0.0, 1.0};
    case ChannelKind::insertion:
        return {1.0 - spec.param, 0.0, -spec.param, 1.0};
    case ChannelKind::symmetry:
        return {1.0, 0.0, 0.0, 1.0};
    }
    throw std::logic_error("unreachable channel kind");
}

MobiusGF gf_compose(const MobiusGF& outer, const MobiusGF& inner) {
    // 2x2 coefficient-matrix product [[a,b],[c,d]]_outer · [[a,b],[c,d]]_inner.
    return {outer.a * inner.a + outer.b * inner.c, outer.a * inner.b + outer.b * inner.d,
            outer.c * inner.a + outer.d * inner.c, outer.c * inner.b + outer.d * inner.d};
}

MobiusGF gf_invert(const MobiusGF& g) {
    double det = g.a * g.d - g.b * g.c;
    if (std::abs(det) < 1e-300) throw std::invalid_argument("gf_invert: transform not invertible");
    return {g.d, -g.b, -g.c, g.a};
}

std::complex<double> gf_eval(const MobiusGF& g, std::complex<double> z) {
    std::complex<double> den = g.c * z + g.d;
    if (std::abs(den) < 1e-12) {
        throw pole_error("generating function evaluated at a pole");
    }
    return (g.a * z + g.b) / den;
}

double gf_derivative_at_one(const MobiusGF& g) {
    double den = g.c + g.d;
    if (std::abs(den) < 1e-12) {
        throw pole_error("generating function has a pole at 1");
    }
    return (g.a * g.d - g.b * g.c) / (den * den);
}

MobiusGF composite_gf(const CompositeChannel& chan) {
    if (chan.stages.empty()) throw std::invalid_argument("composite channel must be nonempty");
    MobiusGF g{1.0, 0.0, 0.0, 1.0};
    // First-applied stage outermost: G = G_{S1}∘G_{S2}∘…∘G_{SL}.
    for (const ChannelSpec& spec : chan.stages) {
        g = gf_compose(g, length_gf(spec));
    }
    return g;
}

std::complex<double> inverse_gf_eval(const CompositeChannel& chan, double alpha) {
    if (!(alpha >= -3.14159265358979323846 && alpha <= 3.14159265358979323846)) {
        throw std::invalid_argument("inverse_gf_eval: alpha must lie in [-pi, pi]");
    }
    if (alpha == 0.0) return {1.0, 0.0}; // PGF fixed point, exact by construction
    MobiusGF ginv = gf_invert(composite_gf(chan));
    std::complex<double> zeta = std::polar(1.0, alpha);
    return gf_eval(ginv, zeta);
}

} // namespace qpt
