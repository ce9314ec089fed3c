#include <doctest.h>

#include <cmath>
#include <numbers>

#include "coevnet/model.hpp"
#include "support.hpp"

using namespace coevnet;
using coevnet::testing::Rng;

namespace {

// K^2 enumeration of the role pair, independent of marginal_link_prob.
double enumerate_link_prob(const std::vector<double>& pp, const std::vector<double>& pq, const Matrix& B, double rho) {
    double total = 0.0;
    const std::size_t k = pp.size();
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            std::vector<double> zs(k, 0.0), zr(k, 0.0);
            zs[g] = 1.0;
            zr[h] = 1.0;
            double bilinear = 0.0;
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) bilinear += zs[a] * B(a, b) * zr[b];
            }
            total += pp[g] * pq[h] * (1.0 - rho) * bilinear;
        }
    }
    return total;
}

}  // namespace

TEST_CASE("softmax examples") {
    auto a = softmax_from_natural(std::vector<double>{0.0, 0.0});
    CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
    auto b = softmax_from_natural(std::vector<double>{7.5, 7.5, 7.5});
    for (double x : b) CHECK(std::abs(x - 1.0 / 3.0) < 1e-15);
    auto c = softmax_from_natural(std::vector<double>{std::log(1.0), std::log(2.0), std::log(7.0)});
    CHECK(std::abs(c[0] - 0.1) < 1e-15);
    CHECK(std::abs(c[1] - 0.2) < 1e-15);
    CHECK(std::abs(c[2] - 0.7) < 1e-15);
}

TEST_CASE("softmax is shift invariant and survives large inputs") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> mu(4), shifted(4);
        const double c = coevnet::testing::uniform(rng, -500.0, 500.0);
        for (std::size_t k = 0; k < 4; ++k) {
            mu[k] = 3.0 * coevnet::testing::normal(rng);
            shifted[k] = mu[k] + c;
        }
        const auto a = softmax_from_natural(mu);
        const auto b = softmax_from_natural(shifted);
        double sum = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(std::abs(a[k] - b[k]) < 1e-12);
            CHECK(std::abs(a[k] - std::exp(mu[k] - log_sum_exp(mu))) < 1e-12);
            sum += a[k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    auto big = softmax_from_natural(std::vector<double>{1000.0, 0.0});
    CHECK(big[0] == 1.0);
    CHECK(big[1] == 0.0);
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS_AS(softmax_from_natural(std::vector<double>{0.0, NAN}), std::invalid_argument);
    CHECK_THROWS_AS(softmax_from_natural(std::vector<double>{INFINITY, 0.0}), std::invalid_argument);
}

TEST_CASE("neighborhood mean examples") {
    Matrix mu(4, 3);
    mu(1, 0) = 1.0;
    mu(2, 1) = 1.0;
    mu(3, 2) = 1.0;
    Matrix w(4, 4, 1.0);
    w(0, 2) = 2.0;
    Snapshot y(4);

    CHECK_FALSE(neighborhood_mean(mu, y, w, 0).has_value());

    y.set(0, 2);
    auto one = neighborhood_mean(mu, y, w, 0);
    REQUIRE(one);
    CHECK(*one == std::vector<double>{0.0, 1.0, 0.0});

    y.set(0, 1);
    y.set(0, 3);
    auto three = neighborhood_mean(mu, y, w, 0);
    REQUIRE(three);
    CHECK((*three)[0] == doctest::Approx(0.25));
    CHECK((*three)[1] == doctest::Approx(0.5));
    CHECK((*three)[2] == doctest::Approx(0.25));

    Matrix mu2(3, 2);
    mu2(1, 0) = 1.0;
    mu2(2, 1) = 1.0;
    Snapshot y2(3);
    y2.set(0, 1);
    y2.set(0, 2);
    auto half = neighborhood_mean(mu2, y2, Matrix(3, 3, 0.7), 0);
    REQUIRE(half);
    CHECK((*half)[0] == doctest::Approx(0.5));
    CHECK((*half)[1] == doctest::Approx(0.5));
}

TEST_CASE("influence mean") {
    const std::vector<double> p{4.0, 0.0}, s{0.0, 4.0};
    CHECK(influence_mean(p, s, 0.0) == p);
    CHECK(influence_mean(p, s, 1.0) == s);
    CHECK(influence_mean(p, s, 0.25) == std::vector<double>{3.0, 1.0});
    // affine in beta
    const auto half = influence_mean(p, s, 0.5);
    for (std::size_t k = 0; k < 2; ++k) CHECK(half[k] == doctest::Approx(0.5 * (p[k] + s[k])));
    CHECK_THROWS_AS(influence_mean(p, s, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(influence_mean(p, s, -0.1), std::invalid_argument);
}

TEST_CASE("marginal link probability examples") {
    Matrix B(2, 2);
    B(0, 0) = 0.9;
    B(0, 1) = 0.1;
    B(1, 0) = 0.1;
    B(1, 1) = 0.8;
    const std::vector<double> e0{1.0, 0.0};
    CHECK(marginal_link_prob(e0, e0, B, 0.0) == 0.9);
    CHECK(marginal_link_prob(std::vector<double>{0.3, 0.7}, std::vector<double>{0.5, 0.5}, Matrix(2, 2, 1.0), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> pp{0.6, 0.4}, pq{0.3, 0.7};
    // (0.9)(0.6*0.3*0.9 + 0.6*0.7*0.1 + 0.4*0.3*0.1 + 0.4*0.7*0.8) = 0.9 * 0.440
    CHECK(std::abs(marginal_link_prob(pp, pq, B, 0.1) - 0.396) < 1e-15);
    CHECK(std::abs(marginal_link_prob(pp, pq, B, 0.1) - enumerate_link_prob(pp, pq, B, 0.1)) < 1e-15);
}

TEST_CASE("marginal link probability matches enumeration on random instances") {
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const std::size_t k = 2 + static_cast<std::size_t>(i % 4);
        const auto pp = coevnet::testing::random_simplex(rng, k);
        const auto pq = coevnet::testing::random_simplex(rng, k);
        Matrix B(k, k);
        for (auto& b : B.values()) b = coevnet::testing::uniform(rng, 0.0, 1.0);
        const double rho = coevnet::testing::uniform(rng, 0.0, 0.99);
        const double v = marginal_link_prob(pp, pq, B, rho);
        CHECK(std::abs(v - enumerate_link_prob(pp, pq, B, rho)) < 1e-12);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("transition log density") {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    const std::vector<double> zero{0.0}, unit{1.0};
    CHECK(transition_log_density(zero, zero, zero, 0.0, unit) == doctest::Approx(-half_log_2pi).epsilon(1e-15));
    const std::vector<double> r{1.7};
    CHECK(transition_log_density(r, zero, zero, 0.3, unit) ==
          doctest::Approx(-half_log_2pi - 0.5 * 1.7 * 1.7).epsilon(1e-15));

    // independent evaluation of the diagonal Gaussian density
    const std::vector<double> next{0.3, -1.2, 2.0}, mp{1.0, 0.5, -0.5}, ms{-0.4, 0.1, 0.9}, var{0.4, 1.3, 0.2};
    const double beta = 0.35;
    double expected = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double m = (1.0 - beta) * mp[k] + beta * ms[k];
        expected += -0.5 * std::log(2.0 * std::numbers::pi * var[k]) - (next[k] - m) * (next[k] - m) / (2.0 * var[k]);
    }
    CHECK(std::abs(transition_log_density(next, mp, ms, beta, var) - expected) < 1e-12);
    CHECK_THROWS_AS(transition_log_density(next, mp, ms, beta, std::vector<double>{0.4, 0.0, 0.2}),
                    std::invalid_argument);
}

TEST_CASE("transition density integrates to one") {
    // Importance sampling from a wider Gaussian: E_g[f/g] = 1.
    Rng rng(17);
    const std::vector<double> mp{0.4, -0.2}, ms{1.0, 0.5}, var{0.3, 0.8};
    const double beta = 0.6, scale = 2.0;
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> x(2);
        double log_g = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const double s = scale * std::sqrt(var[k]);
            const double e = coevnet::testing::normal(rng);
            x[k] = (1.0 - beta) * mp[k] + beta * ms[k] + s * e;
            log_g += -0.5 * std::log(2.0 * std::numbers::pi * s * s) - 0.5 * e * e;
        }
        const double ratio = std::exp(transition_log_density(x, mp, ms, beta, var) - log_g);
        sum += ratio;
        sum2 += ratio * ratio;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("membership state maps natural parameters to the simplex") {
    NodeSeries mu = make_node_series(2, 3, 2);
    mu[1](2, 0) = 3.0;
    const auto state = MembershipState::from_natural(mu);
    REQUIRE(state.pi.size() == 2);
    CHECK(state.pi[0](0, 0) == doctest::Approx(0.5));
    CHECK(state.pi[1](2, 0) == doctest::Approx(std::exp(3.0) / (1.0 + std::exp(3.0))));
}

TEST_CASE("validation of networks and parameters") {
    DynamicNetwork ragged;
    ragged.snapshots = {Snapshot(3), Snapshot(4)};
    CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);

    DynamicNetwork labelled;
    labelled.snapshots = {Snapshot(2)};
    labelled.node_labels = {"a"};
    CHECK_THROWS_AS(labelled.validate(), std::invalid_argument);

    Snapshot s(3);
    CHECK_THROWS_AS(s.set(1, 1), std::invalid_argument);

    auto params = ModelParams::defaults(3, 2);
    CHECK_NOTHROW(params.validate());
    params.B(0, 1) = 1.2;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = ModelParams::defaults(3, 2);
    params.beta[1] = -0.1;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = ModelParams::defaults(3, 2);
    params.w(0, 1) = -1.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = ModelParams::defaults(3, 2);
    params.sigma_mu[0] = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = ModelParams::defaults(3, 2);
    params.A[1] = -1.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = ModelParams::defaults(3, 2);
    params.rho = 1.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
}

TEST_CASE("neighbourhoods renormalise weights and index both directions") {
    DynamicNetwork Y;
    Snapshot s(3);
    s.set(0, 1);
    s.set(0, 2);
    s.set(2, 1);
    Y.snapshots = {s, Snapshot(3)};
    Matrix w(3, 3, 1.0);
    w(0, 1) = 3.0;
    const Neighborhoods nb(Y, w);
    REQUIRE(nb.influencers(0, 0).size() == 2);
    CHECK(nb.influencers(0, 0)[0].node == 1);
    CHECK(nb.influencers(0, 0)[0].weight == doctest::Approx(0.75));
    CHECK(nb.influencers(0, 0)[1].weight == doctest::Approx(0.25));
    CHECK(nb.weight_total(0, 0) == doctest::Approx(4.0));
    CHECK(nb.influencees(0, 1).size() == 2);
    CHECK(nb.influencers(1, 0).empty());
    CHECK(nb.weight_total(1, 0) == 0.0);

    auto params = ModelParams::defaults(3, 2);
    params.beta = {0.4, 0.5, 0.6};
    const Model model(Y, params);
    CHECK(model.effective_beta(0, 0) == 0.4);
    CHECK(model.effective_beta(0, 1) == 0.0);
    CHECK(model.effective_beta(1, 0) == 0.0);
}
