#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "qpt/channels.hpp"
#include "qpt/kmer.hpp"
#include "qpt/rng.hpp"

using namespace qpt;
using C = std::complex<double>;

namespace {

const std::string kX30 = "110100101011001011110001101001";

std::vector<Bits> make_traces(const CompositeChannel& chan, BitSpan x, std::size_t n,
                              std::uint64_t seed) {
    std::vector<Bits> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        Stream st(derive_key({seed, TAG_SIMULATE, t}));
        out.push_back(sample_trace(chan, x, st));
    }
    return out;
}

// One Monte Carlo convergence case: the corrected estimate must sit within
// slack*stderr + bias budget of the exact value, and the channel shape must
// admit the exact mapping.
void mc_case(const std::string& xs, const std::string& ws, const std::string& chans,
             double alpha, std::size_t n, double slack) {
    Bits x = parse_bits(xs);
    Bits w = parse_bits(ws);
    CompositeChannel chan = parse_channel(chans);
    std::vector<Bits> traces = make_traces(chan, x, n, 1234);
    KmerEstimate est = estimate_kmer(traces, chan, {w, alpha, 0.01}, 4242, 4);
    C truth = exact_kmer_value(BitSpan(x.data(), x.size()), BitSpan(w.data(), w.size()),
                               std::polar(1.0, alpha));
    double err = std::abs(est.value - truth);
    double tol = slack * est.stderr_proxy + est.bias_budget;
    CAPTURE(chans);
    CAPTURE(ws);
    CAPTURE(alpha);
    CHECK(err <= tol);
    CHECK(est.mapping_exact);
}

} // namespace

TEST_CASE("exact_kmer_value spot checks") {
    Bits x = parse_bits("10110");
    Bits w1 = parse_bits("1");
    Bits w11 = parse_bits("11");
    // zeta = 1: plain occurrence count of "1" in 10110.
    CHECK(std::abs(exact_kmer_value(BitSpan(x.data(), x.size()), BitSpan(w1.data(), w1.size()),
                                    {1.0, 0.0}) -
                   C{3.0, 0.0}) < 1e-12);
    // "11" occurs only at zero-based position 2; zeta = i gives i^2 = -1.
    CHECK(std::abs(exact_kmer_value(BitSpan(x.data(), x.size()), BitSpan(w11.data(), w11.size()),
                                    {0.0, 1.0}) -
                   C{-1.0, 0.0}) < 1e-12);
    CHECK_THROWS_AS(exact_kmer_value(BitSpan(w1.data(), w1.size()), BitSpan(x.data(), x.size()),
                                     {1.0, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("noiseless traces reproduce the exact value to solver precision") {
    Bits x = parse_bits(kX30);
    Bits w = parse_bits("101");
    CompositeChannel chan = parse_channel("sym:0.0");
    std::vector<Bits> traces(50, x);
    KmerEstimate est = estimate_kmer(traces, chan, {w, 0.37, 0.01}, 7, 1);
    C truth = exact_kmer_value(BitSpan(x.data(), x.size()), BitSpan(w.data(), w.size()),
                               std::polar(1.0, 0.37));
    CHECK(std::abs(est.value - truth) < 1e-9);
}

TEST_CASE("Monte Carlo estimates converge to truth for every channel shape") {
    mc_case("10110", "1", "del:0.2", 0.3, 200000, 4.0);
    mc_case(kX30, "101", "del:0.2,sym:0.05", 0.1, 200000, 4.0);
    mc_case("1011001", "10", "ins:0.25", 0.3, 300000, 4.0);
    mc_case("10110", "1", "ins:0.2,del:0.2", 0.25, 400000, 4.0);
    mc_case("101100111", "101", "ins:0.2,del:0.2", 0.2, 400000, 4.0);
    mc_case("10110", "11", "del:0.25,ins:0.15", 0.3, 300000, 4.0);
}

TEST_CASE("zero frequency gives an exactly real occurrence count and length estimate") {
    Bits x = parse_bits("10110");
    Bits w = parse_bits("1");
    CompositeChannel chan = parse_channel("ins:0.2,del:0.2");
    std::vector<Bits> traces = make_traces(chan, BitSpan(x.data(), x.size()), 200000, 99);
    KmerEstimate est = estimate_kmer(traces, chan, {w, 0.0, 0.01}, 5, 2);
    CHECK(est.value.imag() == 0.0);
    double err = std::abs(est.value.real() - 3.0);
    CHECK(err <= 4.0 * est.stderr_proxy + est.bias_budget);
    CHECK(est.n_hat == 5);
}

TEST_CASE("worker count never changes any reported number") {
    Bits x = parse_bits("101100111");
    Bits w = parse_bits("101");
    CompositeChannel chan = parse_channel("ins:0.2,del:0.2");
    std::vector<Bits> traces = make_traces(chan, BitSpan(x.data(), x.size()), 20000, 321);
    KmerQuery q{w, 0.2, 0.01};
    KmerEstimate a = estimate_kmer(traces, chan, q, 11, 1);
    KmerEstimate b = estimate_kmer(traces, chan, q, 11, 4);
    CHECK(a.value == b.value);
    CHECK(a.stderr_proxy == b.stderr_proxy);
    REQUIRE(a.per_suffix_means.size() == b.per_suffix_means.size());
    for (std::size_t j = 0; j < a.per_suffix_means.size(); ++j) {
        CHECK(a.per_suffix_means[j] == b.per_suffix_means[j]);
        CHECK(std::abs(a.per_suffix_means[j]) <= a.gamma_total + 1e-12);
    }
}

TEST_CASE("plan_kmer + estimate_kmer_at equals estimate_kmer bit for bit") {
    Bits x = parse_bits("1101001010");
    Bits w = parse_bits("10");
    CompositeChannel chan = parse_channel("ins:0.2,del:0.2");
    std::vector<Bits> traces = make_traces(chan, BitSpan(x.data(), x.size()), 30000, 55);
    KmerPlan plan = plan_kmer(traces, chan, w, 0.01, 1717, 2);
    for (double alpha : {0.0, 0.05, 0.3}) {
        KmerEstimate via_plan = estimate_kmer_at(plan, alpha);
        KmerEstimate direct = estimate_kmer(traces, chan, {w, alpha, 0.01}, 1717, 2);
        CAPTURE(alpha);
        CHECK(via_plan.value == direct.value);
        CHECK(via_plan.stderr_proxy == direct.stderr_proxy);
        CHECK(via_plan.bias_budget == direct.bias_budget);
        CHECK(via_plan.n_hat == direct.n_hat);
        CHECK(via_plan.z_used == direct.z_used);
    }
}

TEST_CASE("shapes outside the exact mapping are flagged, not hidden") {
    Bits x = parse_bits("101101");
    Bits w = parse_bits("10");
    CompositeChannel chan = parse_channel("ins:0.2,del:0.2,ins:0.2");
    std::vector<Bits> traces = make_traces(chan, BitSpan(x.data(), x.size()), 5000, 3);
    KmerEstimate est = estimate_kmer(traces, chan, {w, 0.1, 0.01}, 9, 1);
    CHECK_FALSE(est.mapping_exact);
}

TEST_CASE("kmer_stderr requires at least two traces") {
    KmerEstimate est;
    est.n_traces = 1;
    CHECK_THROWS_AS(kmer_stderr(est), std::invalid_argument);
}
