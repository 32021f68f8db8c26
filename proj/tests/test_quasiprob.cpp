#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qpt/quasiprob.hpp"
#include "qpt/rng.hpp"

using namespace qpt;

namespace {

Matrix identity4() { return Matrix::Identity(4, 4); }

} // namespace

TEST_CASE("deletion inverse weights: closed-form gamma, exact sum, tail") {
    QPDistribution q = qp_deletion(0.25);
    CHECK(q.gamma == doctest::Approx(1.0 / (1.0 - 0.5)).epsilon(1e-14)); // 2
    double sum = std::accumulate(q.weights.begin(), q.weights.end(), 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(q.tail_bound < 1e-12);
    // Alternating geometric signs: q_j = (1/(1-d)) (-d/(1-d))^j.
    REQUIRE(q.weights.size() >= 3);
    CHECK(q.weights[1] == doctest::Approx((1.0 / 0.75) * (-0.25 / 0.75)).epsilon(1e-12));
    CHECK(q.weights[2] == doctest::Approx((1.0 / 0.75) * std::pow(0.25 / 0.75, 2)).epsilon(1e-12));

    CHECK_THROWS_AS(qp_deletion(0.5), std::invalid_argument);
    CHECK_THROWS_AS(qp_deletion(0.6), std::invalid_argument);
}

TEST_CASE("insertion inverse weights are an exact two-point signed measure") {
    QPDistribution q = qp_insertion(0.4);
    REQUIRE(q.weights.size() == 2);
    CHECK(q.weights[0] == doctest::Approx(1.0 / 0.6).epsilon(1e-15));
    CHECK(q.weights[1] == doctest::Approx(-0.4 / 0.6).epsilon(1e-15));
    CHECK(q.gamma == doctest::Approx(1.4 / 0.6).epsilon(1e-15));
    CHECK(q.tail_bound == 0.0);
}

TEST_CASE("symmetry inverse weights") {
    QPDistribution q = qp_symmetry(0.1);
    REQUIRE(q.weights.size() == 2);
    CHECK(q.weights[0] == doctest::Approx(0.9 / 0.8).epsilon(1e-15));
    CHECK(q.weights[1] == doctest::Approx(-0.1 / 0.8).epsilon(1e-15));
    CHECK(q.gamma == doctest::Approx(1.0 / 0.8).epsilon(1e-15));
    CHECK_THROWS_AS(qp_symmetry(0.5), std::invalid_argument);
}

TEST_CASE("qp_for_stage dispatches on the stage kind") {
    CHECK(qp_for_stage(ChannelSpec::deletion(0.2)).kind == ChannelKind::deletion);
    CHECK(qp_for_stage(ChannelSpec::insertion(0.2)).kind == ChannelKind::insertion);
    CHECK(qp_for_stage(ChannelSpec::symmetry(0.2)).kind == ChannelKind::symmetry);
    CHECK(qp_for_stage(ChannelSpec::insertion(0.2)).weights.size() == 2);
}

TEST_CASE("qp_sample reproduces each signed weight in expectation") {
    // E[weight * 1[index == j]] = q_j for every j, by construction; check the
    // first few weights empirically for each family.
    auto check_family = [](const QPDistribution& q, std::uint64_t salt) {
        const int n = 400000;
        std::vector<double> acc(q.weights.size() + 4, 0.0);
        Stream st(derive_key({salt, 77}));
        for (int t = 0; t < n; ++t) {
            SignedDraw d = qp_sample(q, st);
            REQUIRE(d.index >= 0);
            CHECK(std::abs(std::abs(d.weight) - q.gamma) < 1e-12);
            if (d.index < static_cast<int>(acc.size())) acc[d.index] += d.weight;
        }
        for (std::size_t j = 0; j < std::min<std::size_t>(3, q.weights.size()); ++j) {
            double est = acc[j] / n;
            double sd = q.gamma / std::sqrt(static_cast<double>(n));
            CHECK(std::abs(est - q.weights[j]) < 5.0 * sd);
        }
    };
    check_family(qp_deletion(0.25), 1);
    check_family(qp_insertion(0.5), 2);
    check_family(qp_symmetry(0.1), 3);
}

TEST_CASE("norm_1inf and is_column_stochastic basics") {
    Matrix a(2, 2);
    a << 1.0, -2.0, 0.25, 0.5;
    CHECK(norm_1inf(a) == doctest::Approx(3.0).epsilon(1e-15)); // row 0: 1+2

    Matrix flip(2, 2);
    flip << 0.9, 0.1, 0.1, 0.9;
    CHECK(is_column_stochastic(flip));
    Matrix bad(2, 2);
    bad << 0.9, 0.1, 0.2, 0.9;
    CHECK_FALSE(is_column_stochastic(bad));
    Matrix neg(2, 2);
    neg << 1.1, 0.0, -0.1, 1.0;
    CHECK_FALSE(is_column_stochastic(neg));
}

TEST_CASE("symmetry decomposition residual is exact at machine precision") {
    for (double sigma : {0.05, 0.1, 0.25}) {
        Matrix lambda(2, 2);
        lambda << 1.0 - sigma, sigma, sigma, 1.0 - sigma;
        Matrix id = Matrix::Identity(2, 2);
        Matrix fl(2, 2);
        fl << 0.0, 1.0, 1.0, 0.0;
        QPDistribution q = qp_symmetry(sigma);
        CHECK(decomposition_residual(lambda, q.weights, {id, fl}) <= 1e-12);
    }
}

TEST_CASE("first-order inverse of a perturbed permutation is second-order accurate") {
    // Lambda = (1-eps) I + eps E with E a permutation: the signed weights
    // (1+eps) on I and -eps on E reproduce Lambda^{-1} up to O(eps^2).
    std::mt19937_64 gen(2024);
    std::vector<int> perm{0, 1, 2, 3};
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(perm.begin(), perm.end(), gen);
        Matrix e = Matrix::Zero(4, 4);
        for (int c = 0; c < 4; ++c) e(perm[c], c) = 1.0;
        std::uniform_real_distribution<double> ud(0.01, 0.1);
        double eps = ud(gen);
        Matrix lambda = (1.0 - eps) * identity4() + eps * e;
        double r = decomposition_residual(lambda, {1.0 + eps, -eps}, {identity4(), e});
        CHECK(r <= 2.0 * eps * eps);
    }
}

TEST_CASE("decomposition_residual input validation") {
    Matrix singular = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(decomposition_residual(singular, {1.0}, {Matrix::Identity(2, 2)}),
                    std::invalid_argument);
    // More weights than ops is an error; fewer is allowed (zero padding).
    Matrix id = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(decomposition_residual(id, {0.5, 0.5}, {id}), std::invalid_argument);
    CHECK(decomposition_residual(id, {1.0}, {id, id}) == doctest::Approx(0.0));
}

TEST_CASE("qp_solve recovers the closed-form symmetry weights") {
    double sigma = 0.2;
    Matrix lambda(2, 2);
    lambda << 0.8, 0.2, 0.2, 0.8;
    Matrix id = Matrix::Identity(2, 2);
    Matrix fl(2, 2);
    fl << 0.0, 1.0, 1.0, 0.0;
    QPSolveResult r = qp_solve(lambda, {id, fl});
    REQUIRE(r.weights.size() == 2);
    CHECK(r.weights[0] == doctest::Approx(0.8 / 0.6).epsilon(1e-9));
    CHECK(r.weights[1] == doctest::Approx(-0.2 / 0.6).epsilon(1e-9));
    CHECK(r.residual <= 1e-9);
    CHECK(std::accumulate(r.weights.begin(), r.weights.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));

    // A deficient operation set is reported, not thrown: identity alone cannot
    // invert a genuine flip channel, so the residual stays bounded away from 0.
    QPSolveResult bad = qp_solve(lambda, {id});
    CHECK(bad.residual > 0.1);
    CHECK(bad.weights.size() == 1);
    CHECK(bad.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
}
