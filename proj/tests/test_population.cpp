#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/population.hpp"
#include "qpt/rng.hpp"

using namespace qpt;

namespace {

// Mixture sampling convention shared with the CLI: the stream's first draw
// picks the population member, the same stream then drives the channel.
std::vector<Bits> make_pop_traces(const std::vector<Bits>& pop,
                                  const std::vector<double>& weights,
                                  const CompositeChannel& chan, std::size_t n,
                                  std::uint64_t seed) {
    std::vector<Bits> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        Stream st(derive_key({seed, TAG_SIMULATE, static_cast<std::uint64_t>(t)}));
        double u = st.next_double();
        std::size_t pick = 0;
        double acc = 0.0;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            acc += weights[i];
            if (u < acc) {
                pick = i;
                break;
            }
            pick = i;
        }
        out.push_back(sample_trace(chan, BitSpan(pop[pick].data(), pop[pick].size()), st));
    }
    return out;
}

} // namespace

TEST_CASE("population_index and population_string are inverse bijections") {
    for (std::size_t i = 0; i < 16; ++i) {
        Bits s = population_string(i, 4);
        CHECK(population_index(BitSpan(s.data(), s.size())) == i);
    }
    Bits b = parse_bits("110");
    CHECK(population_index(BitSpan(b.data(), b.size())) == 6); // big-endian
    CHECK(format_bits(population_string(6, 3)) == "110");
}

TEST_CASE("point mass through a noiseless channel is recovered exactly") {
    Bits y0 = parse_bits("010");
    CompositeChannel chan = parse_channel("sym:0.0");
    std::vector<Bits> traces(64, y0); // power of two keeps quotients dyadic
    PopulationEstimate est = recover_population(traces, chan, 3, 0.5, 9, 2);
    REQUIRE(est.raw.size() == 8);
    double sum = 0.0;
    for (std::size_t i = 0; i < est.raw.size(); ++i) {
        sum += est.raw[i];
        double want = i == population_index(BitSpan(y0.data(), y0.size())) ? 1.0 : 0.0;
        CHECK(est.raw[i] == want);
    }
    CHECK(sum == 1.0);
    CHECK(std::abs(est.clipped[population_index(BitSpan(y0.data(), y0.size()))] - 1.0) < 1e-12);
    CHECK(est.eps_per_string == doctest::Approx(0.5 / 8.0).epsilon(1e-15));
}

TEST_CASE("two-string mixture through deletion is recovered within TVD 0.1") {
    std::vector<Bits> pop = {parse_bits("0011"), parse_bits("1100")};
    std::vector<double> w = {0.5, 0.5};
    CompositeChannel chan = parse_channel("del:0.15");
    std::vector<Bits> traces = make_pop_traces(pop, w, chan, 300000, 21);
    PopulationEstimate est = recover_population(traces, chan, 4, 0.1, 4242, 4);
    std::vector<double> truth(16, 0.0);
    truth[population_index(BitSpan(pop[0].data(), pop[0].size()))] = 0.5;
    truth[population_index(BitSpan(pop[1].data(), pop[1].size()))] = 0.5;
    CHECK(tvd(est, truth) <= 0.1);
    double csum = 0.0;
    for (double v : est.clipped) csum += v;
    CHECK(std::abs(csum - 1.0) < 1e-9);
}

TEST_CASE("uniform population through bit flips: every raw estimate lands close") {
    std::vector<Bits> pop;
    std::vector<double> w(8, 0.125);
    for (std::size_t i = 0; i < 8; ++i) pop.push_back(population_string(i, 3));
    CompositeChannel chan = parse_channel("sym:0.1");
    std::vector<Bits> traces = make_pop_traces(pop, w, chan, 100000, 22);
    PopulationEstimate est = recover_population(traces, chan, 3, 0.4, 4242, 4);
    double worst = 0.0;
    for (std::size_t i = 0; i < 8; ++i) worst = std::max(worst, std::abs(est.raw[i] - 0.125));
    CHECK(worst <= 0.05);
}

TEST_CASE("worker count never changes the estimates") {
    std::vector<Bits> pop = {parse_bits("101"), parse_bits("010")};
    std::vector<double> w = {0.3, 0.7};
    CompositeChannel chan = parse_channel("ins:0.2,del:0.2");
    std::vector<Bits> traces = make_pop_traces(pop, w, chan, 5000, 5);
    PopulationEstimate a = recover_population(traces, chan, 3, 0.3, 77, 1);
    PopulationEstimate b = recover_population(traces, chan, 3, 0.3, 77, 5);
    REQUIRE(a.raw.size() == b.raw.size());
    for (std::size_t i = 0; i < a.raw.size(); ++i) {
        CHECK(a.raw[i] == b.raw[i]);
        CHECK(a.clipped[i] == b.clipped[i]);
    }
}

TEST_CASE("tvd arithmetic and guards") {
    std::vector<double> p = {0.6, 0.4};
    std::vector<double> q = {0.5, 0.5};
    CHECK(std::abs(tvd(p, q) - 0.1) < 1e-15);
    CHECK(tvd(p, p) == 0.0);
    std::vector<double> a = {1.0, 0.0};
    std::vector<double> b = {0.0, 1.0};
    CHECK(std::abs(tvd(a, b) - 1.0) < 1e-15);
    CHECK_THROWS_AS(tvd(p, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("recover_population input guards") {
    std::vector<Bits> traces = {parse_bits("101")};
    CompositeChannel chan = parse_channel("sym:0.1");
    CHECK_THROWS_AS(recover_population(traces, chan, 0, 0.1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(recover_population(traces, chan, 17, 0.1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(recover_population(traces, chan, 3, 0.0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(recover_population(std::vector<Bits>{}, chan, 3, 0.1, 1, 1),
                    std::invalid_argument);
}
