#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "coevnet/em.hpp"
#include "coevnet/eval.hpp"
#include "coevnet/generator.hpp"
#include "support.hpp"

using namespace coevnet;
using namespace coevnet::testing;

namespace {

GroundTruth small_truth(std::uint64_t seed, std::size_t n = 12, std::size_t k = 2, std::size_t T = 3) {
    BenchmarkOptions o;
    o.N = n;
    o.K = k;
    o.T = T;
    o.seed = seed;
    return generate_sequence(benchmark_config(o));
}

FitConfig small_config(std::size_t k = 2, int restarts = 1) {
    FitConfig config;
    config.K = k;
    config.restarts = restarts;
    config.max_em_iters = 30;
    config.seed = 3;
    return config;
}

bool same_series(const NodeSeries& a, const NodeSeries& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (a[t].values() != b[t].values()) return false;
    }
    return true;
}

double max_abs_diff(const NodeSeries& a, const NodeSeries& b) {
    double out = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        for (std::size_t i = 0; i < a[t].values().size(); ++i) {
            out = std::max(out, std::abs(a[t].values()[i] - b[t].values()[i]));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fit is deterministic") {
    const auto truth = small_truth(1);
    const auto config = small_config(2, 2);
    const auto a = fit(truth.network, config);
    const auto b = fit(truth.network, config);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK(same_series(a.trajectories, b.trajectories));
    CHECK(a.params.B.values() == b.params.B.values());
    CHECK(a.params.beta == b.params.beta);
}

TEST_CASE("fit does not depend on the worker count") {
    const auto truth = small_truth(2);
    const auto config = small_config(2, 3);
    ::setenv("COEVNET_THREADS", "1", 1);
    const auto serial = fit(truth.network, config);
    ::setenv("COEVNET_THREADS", "3", 1);
    const auto threaded = fit(truth.network, config);
    ::unsetenv("COEVNET_THREADS");
    CHECK(serial.elbo_trace == threaded.elbo_trace);
    CHECK(same_series(serial.trajectories, threaded.trajectories));
    CHECK(serial.flags.chosen_restart == threaded.flags.chosen_restart);
}

TEST_CASE("ELBO trace is non-decreasing and the report is well formed") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto truth = small_truth(seed, 10, 3, 3);
        const auto report = fit(truth.network, small_config(3, 2));
        REQUIRE_FALSE(report.elbo_trace.empty());
        for (std::size_t i = 1; i < report.elbo_trace.size(); ++i) {
            CHECK(report.elbo_trace[i] >= report.elbo_trace[i - 1] - 1e-8);
        }
        CHECK(report.flags.chain_elbos.size() == 2);
        CHECK(report.trajectories.size() == 4);
        for (const auto& m : report.trajectories) {
            for (std::size_t p = 0; p < m.rows(); ++p) {
                double total = 0.0;
                for (double x : m.row(p)) {
                    CHECK(x >= 0.0);
                    total += x;
                }
                CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
        const auto recomputed = posterior_trajectories(report.vs);
        CHECK(max_abs_diff(recomputed, report.trajectories) < 1e-14);
        CHECK(report.elbo_trace.back() == doctest::Approx(elbo(Model(truth.network, report.params), report.vs)));
    }
}

TEST_CASE("chosen restart has the highest final objective") {
    const auto truth = small_truth(6);
    const auto report = fit(truth.network, small_config(2, 3));
    const auto& chains = report.flags.chain_elbos;
    for (double e : chains) CHECK(chains[report.flags.chosen_restart] >= e);
}

TEST_CASE("relabelling the starting point relabels the result") {
    const auto truth = small_truth(7, 10, 3, 2);
    const auto config = small_config(3);
    auto start = initial_guess(truth.network, config, 0);
    const std::vector<std::size_t> perm{2, 0, 1};
    auto permuted = start;
    permute_roles(permuted.params, perm);
    permute_roles(permuted.vs, perm);
    const auto a = fit_chain(truth.network, config, start);
    const auto b = fit_chain(truth.network, config, permuted);
    REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
    for (std::size_t i = 0; i < a.elbo_trace.size(); ++i) {
        CHECK(a.elbo_trace[i] == doctest::Approx(b.elbo_trace[i]).epsilon(1e-9));
    }
    CHECK(max_abs_diff(permute_roles(a.trajectories, perm), b.trajectories) < 1e-6);
}

TEST_CASE("best permutation undoes a relabelling") {
    Rng rng(8);
    NodeSeries series(2, Matrix(6, 3));
    for (auto& m : series) {
        for (std::size_t p = 0; p < 6; ++p) {
            const auto v = random_simplex(rng, 3);
            std::copy(v.begin(), v.end(), m.row(p).begin());
        }
    }
    const std::vector<std::size_t> perm{1, 2, 0};
    const auto shuffled = permute_roles(series, perm);
    const auto found = best_role_permutation(shuffled, series);
    CHECK(same_series(permute_roles(shuffled, found), series));
}

TEST_CASE("duplicated snapshot behaves like a static fit") {
    const auto truth = small_truth(9, 16, 2, 0);
    DynamicNetwork Y;
    Y.snapshots = {truth.network.snapshots[0], truth.network.snapshots[0]};
    auto config = small_config(2);
    config.learn_influence = false;
    const auto report = fit(Y, config);
    CHECK(trajectory_l2_error(report.trajectories[0], report.trajectories[1]) < 0.05);
}

TEST_CASE("static baseline has no coupling and agrees with the full model on frozen data") {
    BenchmarkOptions o;
    // enough nodes per snapshot that one slice alone pins the memberships
    o.N = 30;
    o.K = 2;
    o.T = 3;
    o.b_diag = 0.95;
    o.b_off = 0.02;
    o.beta = 0.0;
    o.noise_var = 1e-4;
    o.prior_var = 0.1;
    o.seed = 10;
    const auto truth = generate_sequence(benchmark_config(o));
    const auto config = small_config(2);
    const auto full = fit(truth.network, config);
    const auto baseline = static_baseline_fit(truth.network, config);
    CHECK(baseline.params.static_slices);
    for (double b : baseline.params.beta) CHECK(b == 0.0);
    const auto aligned = permute_roles(baseline.trajectories,
                                       best_role_permutation(baseline.trajectories, full.trajectories));
    double mean = 0.0;
    for (double e : trajectory_l2_errors(aligned, full.trajectories)) mean += e / (o.T + 1);
    CHECK(mean < 0.05);
}

TEST_CASE("uninformative data gives near-uniform memberships") {
    Rng rng(11);
    const auto Y = random_network(rng, 14, 3, 0.3);
    const auto baseline = static_baseline_fit(Y, small_config(2));
    double worst = 0.0;
    for (const auto& m : baseline.trajectories) {
        for (double x : m.values()) worst = std::max(worst, std::abs(x - 0.5));
    }
    CHECK(worst < 0.2);
}

TEST_CASE("invalid inputs are rejected") {
    const auto truth = small_truth(12);
    auto config = small_config(1);
    CHECK_THROWS_AS(fit(truth.network, config), std::invalid_argument);
    config = small_config(2);
    config.em_tol = 0.0;
    CHECK_THROWS_AS(fit(truth.network, config), std::invalid_argument);
    DynamicNetwork one;
    one.snapshots = {Snapshot(1), Snapshot(1)};
    CHECK_THROWS(fit(one, small_config(2)));
}
