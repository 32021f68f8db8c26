#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include "qpt/channels.hpp"
#include "qpt/kmer.hpp"
#include "qpt/reconstruct.hpp"
#include "qpt/rng.hpp"

using namespace qpt;

namespace {

std::vector<Bits> make_traces(const Bits& x, const CompositeChannel& chan, std::size_t n,
                              std::uint64_t seed) {
    std::vector<Bits> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        Stream st(derive_key({seed, TAG_SIMULATE, t}));
        out.push_back(sample_trace(chan, BitSpan(x.data(), x.size()), st));
    }
    return out;
}

} // namespace

TEST_CASE("period of small strings") {
    CHECK(period(parse_bits("0101")) == 2);
    CHECK(period(parse_bits("0000")) == 1);
    CHECK(period(parse_bits("0011")) == 4);
    CHECK(period(parse_bits("0110")) == 3);
    CHECK(period(parse_bits("0")) == 1);
    CHECK(period(parse_bits("01")) == 2);
    CHECK_THROWS_AS(period(Bits{}), std::invalid_argument);
}

TEST_CASE("choose_marker extends the suffix both ways and reports periods") {
    auto c = choose_marker(parse_bits("111000"), 4); // spendable suffix 000
    CHECK(format_bits(c[0].marker) == "0000");
    CHECK(c[0].period == 1);
    CHECK(format_bits(c[1].marker) == "0001");
    CHECK(c[1].period == 4);

    auto c2 = choose_marker(parse_bits("11010"), 4);
    CHECK(format_bits(c2[0].marker) == "0100");
    CHECK(c2[0].period == 3);
    CHECK(format_bits(c2[1].marker) == "0101");
    CHECK(c2[1].period == 2);

    auto c3 = choose_marker(Bits{}, 1);
    CHECK(format_bits(c3[0].marker) == "0");
    CHECK(format_bits(c3[1].marker) == "1");

    // One of the two candidates always has period >= k/2 (the aperiodicity
    // guarantee the estimation step relies on). Prefixes shorter than k - 1
    // bits are rejected outright.
    CHECK_THROWS_AS(choose_marker(parse_bits("10"), 4), std::invalid_argument);
    for (int k : {4, 6, 8}) {
        for (int plen = k - 1; plen <= 10; ++plen) {
            for (std::uint32_t v = 0; v < (1u << plen); ++v) {
                Bits prefix;
                for (int i = 0; i < plen; ++i) prefix.push_back((v >> (plen - 1 - i)) & 1u);
                auto cc = choose_marker(prefix, k);
                CHECK(std::max(cc[0].period, cc[1].period) * 2 >= k);
            }
        }
    }
}

TEST_CASE("frequency_net shape and default marker lengths") {
    auto n1 = frequency_net(0.5, 1);
    REQUIRE(n1.size() == 1);
    CHECK(n1[0] == 0.0);
    auto n3 = frequency_net(0.6, 3);
    REQUIRE(n3.size() == 3);
    CHECK(std::abs(n3[0] + 0.6) < 1e-15);
    CHECK(std::abs(n3[1]) < 1e-15);
    CHECK(std::abs(n3[2] - 0.6) < 1e-15);
    auto n64 = frequency_net(0.78539816339744830962, 64);
    CHECK(n64.front() == -0.78539816339744830962);
    CHECK(n64.back() == 0.78539816339744830962);
    for (std::size_t i = 1; i < n64.size(); ++i) CHECK(n64[i] > n64[i - 1]);
    for (std::size_t i = 0; i < n64.size(); ++i) {
        CHECK(std::abs(n64[i] + n64[n64.size() - 1 - i]) < 1e-15);
    }

    CHECK(default_marker_length(16) == 6);
    CHECK(default_marker_length(12) == 6);
    CHECK(default_marker_length(8) == 5);
    CHECK(default_marker_length(1) == 1);
}

TEST_CASE("solve_feasibility basics: empty, contradiction, band, pinned") {
    FeasibilityProblem p0;
    p0.nvars = 3;
    p0.lo = {0, 0, 0};
    p0.hi = {1, 1, 1};
    auto r0 = solve_feasibility(p0);
    CHECK(r0.verdict == FeasVerdict::feasible);
    CHECK(r0.violation == 0.0);

    FeasibilityProblem p1;
    p1.nvars = 1;
    p1.lo = {0.0};
    p1.hi = {1.0};
    p1.rows.push_back({{-1.0}, -0.6}); // v0 >= 0.6
    p1.rows.push_back({{1.0}, 0.4});   // v0 <= 0.4
    auto r1 = solve_feasibility(p1);
    CHECK(r1.verdict == FeasVerdict::infeasible);
    CHECK(std::abs(r1.violation - 0.2) < 1e-9);

    FeasibilityProblem p2 = p1;
    p2.rows[0].bound = -0.3; // v0 in [0.3, 0.4]
    auto r2 = solve_feasibility(p2);
    CHECK(r2.verdict == FeasVerdict::feasible);
    CHECK(r2.witness[0] >= 0.3 - 1e-9);
    CHECK(r2.witness[0] <= 0.4 + 1e-9);

    FeasibilityProblem p3;
    p3.nvars = 3;
    p3.lo = {1.0, 0.0, 0.0};
    p3.hi = {1.0, 1.0, 1.0};
    p3.rows.push_back({{1.0, 1.0, 1.0}, 1.0});
    p3.rows.push_back({{-1.0, -1.0, -1.0}, -1.0}); // sum == 1 exactly
    auto r3 = solve_feasibility(p3);
    CHECK(r3.verdict == FeasVerdict::feasible);
    CHECK(std::abs(r3.witness[0] - 1.0) < 1e-9);
    CHECK(std::abs(r3.witness[1]) + std::abs(r3.witness[2]) < 1e-6);
}

TEST_CASE("solve_feasibility random gap instances: sound verdicts, optimal violations") {
    std::mt19937_64 gen(12345);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    for (int trial = 0; trial < 120; ++trial) {
        const int d = 1 + static_cast<int>(gen() % 9);
        FeasibilityProblem p;
        p.nvars = d;
        p.lo.assign(d, 0.0);
        p.hi.assign(d, 1.0);

        // Feasible-by-construction core: rows a.x <= a.x* + margin.
        std::vector<double> xstar(d);
        for (auto& v : xstar) v = unit(gen);
        const int mrows = 1 + static_cast<int>(gen() % 12);
        for (int i = 0; i < mrows; ++i) {
            LinearRow row;
            row.coef.resize(d);
            double dot = 0.0;
            for (int j = 0; j < d; ++j) {
                row.coef[j] = coef(gen);
                dot += row.coef[j] * xstar[j];
            }
            row.bound = dot + 0.01 * unit(gen);
            p.rows.push_back(std::move(row));
        }
        auto rf = solve_feasibility(p);
        CAPTURE(trial);
        CHECK(rf.verdict == FeasVerdict::feasible);

        // Contradictory gap pair on a fresh direction: c.x <= L and c.x >= U
        // with U - L > 0 forces summed violation exactly >= U - L.
        std::vector<double> c(d);
        double tlo = 0.0;
        double thi = 0.0;
        for (int j = 0; j < d; ++j) {
            c[j] = coef(gen);
            tlo += std::min(0.0, c[j]);
            thi += std::max(0.0, c[j]);
        }
        if (thi - tlo < 0.5) continue;
        const double lb = tlo + 0.3 * (thi - tlo);
        const double ub = tlo + 0.7 * (thi - tlo);
        FeasibilityProblem q = p;
        std::vector<double> nc(c);
        for (auto& v : nc) v = -v;
        q.rows.push_back({c, lb});
        q.rows.push_back({nc, -ub});
        auto rg = solve_feasibility(q);
        CHECK(rg.verdict == FeasVerdict::infeasible);
        CHECK(rg.violation >= (ub - lb) - 1e-7);

        // The reported minimum is never worse than random box points.
        double best_rand = 1e300;
        std::vector<double> y(d);
        for (int s = 0; s < 300; ++s) {
            for (auto& v : y) v = unit(gen);
            double viol = 0.0;
            for (const auto& row : q.rows) {
                double lhs = 0.0;
                for (int j = 0; j < d; ++j) lhs += row.coef[j] * y[j];
                viol += std::max(0.0, lhs - row.bound);
            }
            best_rand = std::min(best_rand, viol);
        }
        CHECK(rg.violation <= best_rand + 1e-7);
    }
}

TEST_CASE("noiseless constraint blocks: truth feasible, wrong pins infeasible") {
    const Bits x = parse_bits("110100101011");
    const int n = static_cast<int>(x.size());
    const int k = 4;
    const Bits w = parse_bits("1101");
    MarkerConstraintSet cs;
    cs.marker = w;
    cs.n = n;
    cs.sparsity_window = period(w); // 1101 -> 3
    for (double a : frequency_net(0.7, 9)) {
        NetPoint pt;
        pt.alpha = a;
        pt.estimate = exact_kmer_value(BitSpan(x.data(), x.size()), BitSpan(w.data(), w.size()),
                                       std::polar(1.0, a));
        pt.tol = 1e-6;
        cs.net.push_back(pt);
    }
    cs.fixed = {{0, 1}}; // x really does start with 1101
    FeasibilityProblem pr = build_feasibility(cs);
    CHECK(pr.nvars == n - k + 1);
    auto r = solve_feasibility(pr);
    REQUIRE(r.verdict == FeasVerdict::feasible);
    for (int j = 0; j < pr.nvars; ++j) {
        bool occ = true;
        for (int i = 0; i < k; ++i) occ = occ && x[j + i] == w[i];
        CHECK(std::abs(r.witness[j] - (occ ? 1.0 : 0.0)) < 1e-3);
    }

    MarkerConstraintSet bad = cs;
    bad.fixed = {{0, 1}, {1, 1}}; // position 1 does NOT start 1101
    auto rb = solve_feasibility(build_feasibility(bad));
    CHECK(rb.verdict == FeasVerdict::infeasible);
    CHECK(rb.violation > 0.1);
}

TEST_CASE("noiseless reconstruction recovers the string in both modes") {
    const Bits x = parse_bits("110100101011");
    CompositeChannel chan = parse_channel("sym:0.0");
    auto traces = make_traces(x, chan, 256, 7);
    ReconstructParams params;
    params.mode = ReconstructMode::lp;
    params.n = static_cast<int>(x.size());
    params.eps = 0.001;
    params.seed = 99;
    params.threads = 1;
    auto res = reconstruct(traces, chan, params);
    REQUIRE(res.success);
    CHECK(format_bits(res.output) == format_bits(x));
    CHECK(res.k_used == 6);

    params.mode = ReconstructMode::exhaustive;
    auto rex = reconstruct(traces, chan, params);
    REQUIRE(rex.success);
    CHECK(format_bits(rex.output) == format_bits(x));
    CHECK(rex.best_score < 1e-6);
    CHECK(rex.runner_up_score > 1e-3);
}

TEST_CASE("noisy reconstruction: both modes recover, cache shared, threads identical") {
    const Bits x = parse_bits("101100111010");
    CompositeChannel chan = parse_channel("del:0.1,sym:0.05");
    auto traces = make_traces(x, chan, 200000, 31);
    ReconstructParams params;
    params.mode = ReconstructMode::lp;
    params.n = static_cast<int>(x.size());
    params.eps = 0.002;
    params.seed = 4242;
    params.threads = 1;

    MarkerEstimateCache cache(traces, chan, params);
    auto res = reconstruct_with(cache, params);
    REQUIRE(res.success);
    CHECK(format_bits(res.output) == format_bits(x));

    params.mode = ReconstructMode::exhaustive;
    auto rex = reconstruct_with(cache, params);
    REQUIRE(rex.success);
    CHECK(format_bits(rex.output) == format_bits(x));

    ReconstructParams p3 = params;
    p3.threads = 3;
    p3.mode = ReconstructMode::lp;
    auto res3 = reconstruct(traces, chan, p3);
    CHECK(res3.success);
    CHECK(format_bits(res3.output) == format_bits(x));
    p3.mode = ReconstructMode::exhaustive;
    auto rex3 = reconstruct(traces, chan, p3);
    CHECK(rex3.best_score == rex.best_score);
    CHECK(format_bits(rex3.output) == format_bits(rex.output));
}

TEST_CASE("reconstruction guards") {
    std::vector<Bits> traces = {parse_bits("0101")};
    CompositeChannel chan = parse_channel("sym:0.0");
    ReconstructParams params;
    params.mode = ReconstructMode::exhaustive;
    params.n = 23; // exhaustive mode enumerates 2^n candidates; capped at 22
    params.eps = 0.01;
    params.seed = 1;
    CHECK_THROWS_AS(reconstruct(traces, chan, params), std::invalid_argument);
    params.n = 0;
    CHECK_THROWS_AS(reconstruct(traces, chan, params), std::invalid_argument);
}
