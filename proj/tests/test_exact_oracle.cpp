#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <string>

#include "qpt/exact_oracle.hpp"
#include "qpt/kmer.hpp"

using namespace qpt;

namespace {

std::map<std::string, double> as_strings(const ExactDist& d) {
    std::map<std::string, double> out;
    for (const auto& [s, p] : d.mass) out[format_packed(s)] += p;
    return out;
}

BitSpan span(const Bits& b) { return BitSpan(b.data(), b.size()); }

} // namespace

TEST_CASE("PackedU append, prefix, ordering") {
    PackedU s;
    s.append(0);
    s.append(1);
    s.append(2);
    CHECK(s.len == 3);
    CHECK(s.symbol(0) == 0);
    CHECK(s.symbol(1) == 1);
    CHECK(s.symbol(2) == 2);
    CHECK(s.u_count() == 1);
    CHECK(format_packed(s) == "01U");
    PackedU p = s.prefix(2);
    CHECK(p.len == 2);
    CHECK(format_packed(p) == "01");
    CHECK(s.prefix(7) == s); // clamps
    Bits b = parse_bits("01");
    CHECK(PackedU::from_bits(span(b)) == p);
    CHECK(p < s); // shorter sorts first
}

TEST_CASE("identity channel output is a point mass") {
    Bits x = parse_bits("1011");
    ExactDist d = channel_output_distribution(span(x), parse_channel("sym:0.0"), 8);
    REQUIRE(d.mass.size() == 1);
    CHECK(as_strings(d).at("1011") == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.tail == 0.0);
}

TEST_CASE("half-rate deletion on 01 gives the four quarter outcomes") {
    Bits x = parse_bits("01");
    ExactDist d = channel_output_distribution(span(x), parse_channel("del:0.5"), 4);
    auto m = as_strings(d);
    CHECK(m.at("") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(m.at("0") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(m.at("1") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(m.at("01") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(d.tail == 0.0);
}

TEST_CASE("output distribution mass plus tail is exactly one") {
    Bits x = parse_bits("110");
    ExactDist d = channel_output_distribution(span(x), parse_channel("ins:0.5"), 5);
    double total = d.tail;
    for (const auto& [s, p] : d.mass) {
        total += p;
        CHECK(p >= 0.0);
        CHECK(s.u_count() == 0); // concrete strings only
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.tail > 0.0); // insertion can always run past a finite cap
}

TEST_CASE("one deletion at 0.36 equals two chained at 0.2 pointwise") {
    CompositeChannel one = parse_channel("del:0.36");
    CompositeChannel two = parse_channel("del:0.2,del:0.2");
    for (int len = 0; len <= 8; ++len) {
        for (const Bits& x : all_bitstrings(len)) {
            auto a = as_strings(channel_output_distribution(span(x), one, 8));
            auto b = as_strings(channel_output_distribution(span(x), two, 8));
            REQUIRE(a.size() == b.size());
            for (const auto& [s, p] : a) {
                REQUIRE(b.count(s) == 1);
                CHECK(std::abs(p - b.at(s)) <= 1e-10);
            }
        }
    }
}

TEST_CASE("trace_prefix_distribution marks inserted bits as uniform symbols") {
    Bits x = parse_bits("1");
    ExactDist d = trace_prefix_distribution(span(x), parse_channel("ins:0.5"), 2);
    auto m = as_strings(d);
    // Geom(1/2) inserted run: 0 inserts w.p. 1/2 -> trace "1"; 1 insert w.p.
    // 1/4 -> "U1"; >= 2 inserts -> prefix "UU".
    CHECK(m.at("1") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.at("U1") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(m.at("UU") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(d.tail == 0.0);
}

TEST_CASE("exact_expectation against hand-computed flip statistics") {
    // P[first bit stays 1] = 1 - sigma.
    Bits x = parse_bits("1");
    OracleFn f = marker_indicator(parse_bits("1"));
    ExactValue v = exact_expectation(f, span(x), parse_channel("sym:0.25"));
    CHECK(v.value == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(v.error_bound == 0.0);

    // Deletion of the leading 1 exposes a 0: P[trace starts 1] =
    // (1-d) + nothing else for x = 10 with marker "1": kept first bit.
    Bits x2 = parse_bits("10");
    ExactValue v2 = exact_expectation(f, span(x2), parse_channel("del:0.3"));
    CHECK(v2.value == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("noiseless lifted expectation is exactly the statistic") {
    Bits x = parse_bits("10110");
    OracleFn f = marker_indicator(parse_bits("101"));
    CompositeChannel id = parse_channel("sym:0.0");
    QPOracle o = lift_composite(f, id, 0.01);
    ExactValue v = exact_qp_expectation(o, span(x), id);
    CHECK(v.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.error_bound == 0.0);
}

TEST_CASE("exact_qp_prefix_value is the linear extension of the lifted eval") {
    Bits x = parse_bits("101101");
    for (const char* spec : {"del:0.25", "del:0.2,sym:0.1", "ins:0.5,sym:0.05"}) {
        CompositeChannel chan = parse_channel(spec);
        QPOracle o = lift_composite(marker_indicator(parse_bits("10")), chan, 0.01);
        ExactValue direct = exact_qp_expectation(o, span(x), chan);
        ExactDist px = trace_prefix_distribution(span(x), chan, o.input_width);
        double acc = 0.0;
        for (const auto& [s, p] : px.mass) acc += p * exact_qp_prefix_value(o, s);
        CAPTURE(spec);
        CHECK(acc == doctest::Approx(direct.value).epsilon(1e-11));
        CHECK(px.tail * o.bound == doctest::Approx(direct.error_bound).epsilon(1e-12));
    }
}

TEST_CASE("prefix values depend only on the oracle's input window") {
    QPOracle o = lift_composite(marker_indicator(parse_bits("1")),
                                parse_channel("sym:0.1"), 0.01);
    REQUIRE(o.input_width == 1);
    Bits ba = parse_bits("10");
    Bits bb = parse_bits("11");
    PackedU a = PackedU::from_bits(span(ba));
    PackedU b = PackedU::from_bits(span(bb));
    // Both share first symbol 1; the trailing bit is outside the window.
    CHECK(exact_qp_prefix_value(o, a) == exact_qp_prefix_value(o, b));
}

TEST_CASE("trace measure folded against the base matches the direct eval expectation") {
    Bits y = parse_bits("110010");
    CompositeChannel chan = parse_channel("del:0.2,sym:0.1");
    OracleFn f = marker_indicator(parse_bits("110"));
    QPOracle o = lift_composite(f, chan, 0.01);
    SignedDist m = exact_qp_trace_measure(o, span(y));
    double folded = fold_measure(m, f);
    CHECK(folded ==
          doctest::Approx(exact_qp_prefix_value(o, PackedU::from_bits(span(y)))).epsilon(1e-12));
}

TEST_CASE("fold_measure averages uniformly over unresolved symbols") {
    OracleFn f = marker_indicator(parse_bits("10"));
    SignedDist d;
    PackedU s;
    s.append(1);
    s.append(2); // 1U: matches "10" half the time
    d.emplace(s, 1.0);
    CHECK(fold_measure(d, f) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("budget guards throw instead of silently truncating") {
    Bits x = parse_bits("1011010110110");
    ExactBudget tiny;
    tiny.max_input = 12;
    CHECK_THROWS_AS(
        channel_output_distribution(span(x), parse_channel("del:0.2"), 13, tiny),
        std::runtime_error);

    Bits x2 = parse_bits("1011");
    ExactBudget work;
    work.max_work = 10;
    CHECK_THROWS_AS(
        channel_output_distribution(span(x2), parse_channel("ins:0.5"), 8, work),
        std::runtime_error);

    ExactBudget stages;
    stages.max_stages = 1;
    CHECK_THROWS_AS(
        trace_prefix_distribution(span(x2), parse_channel("del:0.1,sym:0.1"), 4, stages),
        std::runtime_error);
}

TEST_CASE("matrix_states ordering and state_index inversion") {
    std::vector<Bits> st = matrix_states(2);
    REQUIRE(st.size() == 7); // "", 0, 1, 00, 10, 01, 11 in (len, value) order
    CHECK(st[0].empty());
    CHECK(format_bits(st[1]) == "0");
    CHECK(format_bits(st[2]) == "1");
    for (std::size_t i = 0; i < st.size(); ++i) {
        CHECK(state_index(span(st[i])) == i);
    }
}

TEST_CASE("matrix_form is column-stochastic and matches the enumerated distribution") {
    for (ChannelSpec spec : {ChannelSpec::deletion(0.3), ChannelSpec::insertion(0.4),
                             ChannelSpec::symmetry(0.2)}) {
        Matrix m = matrix_form(spec, 3);
        CHECK(is_column_stochastic(m, 1e-12));
        std::vector<Bits> st = matrix_states(3);
        CHECK(m.rows() == static_cast<long>(st.size()) + 1); // + overflow state
        // Column of x = "10" agrees with channel_output_distribution.
        Bits x = parse_bits("10");
        CompositeChannel chan;
        chan.stages = {spec};
        auto d = as_strings(channel_output_distribution(span(x), chan, 3));
        std::size_t col = state_index(span(x));
        for (std::size_t i = 0; i < st.size(); ++i) {
            double want = 0.0;
            auto it = d.find(format_bits(st[i]));
            if (it != d.end()) want = it->second;
            CHECK(m(static_cast<long>(i), static_cast<long>(col)) ==
                  doctest::Approx(want).epsilon(1e-12));
        }
    }
}
