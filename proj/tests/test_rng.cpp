#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <set>

#include "qpt/rng.hpp"

using namespace qpt;

TEST_CASE("derive_key is deterministic and sensitive to every part") {
    CHECK(derive_key({1, 2, 3}) == derive_key({1, 2, 3}));
    CHECK(derive_key({1, 2, 3}) != derive_key({3, 2, 1}));
    CHECK(derive_key({1, 2, 3}) != derive_key({1, 2}));
    CHECK(derive_key({1, 2, 3}) != derive_key({1, 2, 4}));
    CHECK(derive_key({0}) != derive_key({}));

    // Purpose tags keep subsystem streams disjoint for identical seeds.
    std::set<std::uint64_t> keys;
    for (std::uint64_t tag : {TAG_SIMULATE + 0ull, TAG_KMER + 0ull, TAG_POPREC + 0ull,
                              TAG_RECONSTRUCT + 0ull, TAG_VERIFY + 0ull, TAG_BENCH + 0ull}) {
        keys.insert(derive_key({42, tag, 7}));
    }
    CHECK(keys.size() == 6);
}

TEST_CASE("streams with equal keys replay identical sequences") {
    Stream a(derive_key({7, 7}));
    Stream b(derive_key({7, 7}));
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("next_double lies in [0,1) and fills the range") {
    Stream s(123);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double v = s.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo < 0.001);
    CHECK(hi > 0.999);
}

TEST_CASE("next_bit is balanced") {
    Stream s(99);
    long ones = 0;
    const long n = 200000;
    for (long i = 0; i < n; ++i) ones += s.next_bit();
    double frac = static_cast<double>(ones) / static_cast<double>(n);
    CHECK(std::abs(frac - 0.5) < 0.01);
}

TEST_CASE("bernoulli matches its rate") {
    Stream s(5);
    long hits = 0;
    const long n = 200000;
    for (long i = 0; i < n; ++i) hits += s.bernoulli(0.3) ? 1 : 0;
    CHECK(std::abs(static_cast<double>(hits) / static_cast<double>(n) - 0.3) < 0.01);
}

TEST_CASE("geometric counts failures before the first success") {
    Stream s(21);
    const double p = 0.4;
    double acc = 0.0;
    const long n = 200000;
    for (long i = 0; i < n; ++i) acc += static_cast<double>(s.geometric(p));
    double mean = acc / static_cast<double>(n);
    CHECK(std::abs(mean - (1.0 - p) / p) < 0.02); // E = (1-p)/p = 1.5

    Stream t(22);
    CHECK_THROWS_AS(t.geometric(0.0), std::invalid_argument);
    CHECK_THROWS_AS(t.geometric(1.5), std::invalid_argument);
    CHECK(t.geometric(1.0) == 0); // always succeeds immediately
}
