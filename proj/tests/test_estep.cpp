#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "coevnet/em.hpp"
#include "coevnet/estep.hpp"
#include "coevnet/generator.hpp"
#include "support.hpp"

using namespace coevnet;
using namespace coevnet::testing;

namespace {

Matrix two_role_B(double a, double b, double c, double d) {
    Matrix B(2, 2);
    B(0, 0) = a;
    B(0, 1) = b;
    B(1, 0) = c;
    B(1, 1) = d;
    return B;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain Nelder-Mead maximiser, used as an optimiser that knows nothing about
// gradients.
std::vector<double> nelder_mead_max(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> start, double scale, int iters) {
    const std::size_t n = start.size();
    std::vector<std::vector<double>> pts(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += scale;
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = -f(pts[i]);
    for (int it = 0; it < iters; ++it) {
        std::vector<std::size_t> order(n + 1);
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        auto sorted_pts = pts;
        auto sorted_vals = vals;
        for (std::size_t i = 0; i <= n; ++i) {
            pts[i] = sorted_pts[order[i]];
            vals[i] = sorted_vals[order[i]];
        }
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
        }
        auto along = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + coef * (pts[n][j] - centroid[j]);
            return x;
        };
        const auto xr = along(-1.0);
        const double fr = -f(xr);
        if (fr < vals[0]) {
            const auto xe = along(-2.0);
            const double fe = -f(xe);
            if (fe < fr) {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if (fr < vals[n - 1]) {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            const auto xc = along(0.5);
            const double fc = -f(xc);
            if (fc < vals[n]) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    vals[i] = -f(pts[i]);
                }
            }
        }
    }
    return pts[std::min_element(vals.begin(), vals.end()) - vals.begin()];
}

struct Instance {
    DynamicNetwork Y;
    ModelParams params;
    VariationalState vs;
};

Instance random_instance(Rng& rng, std::size_t n, std::size_t k, std::size_t times) {
    return {random_network(rng, n, times, 0.45), random_params(rng, n, k), random_state(rng, n, k, times)};
}

}  // namespace

TEST_CASE("phi is uniform under full symmetry") {
    const std::vector<double> zero{0.0, 0.0, 0.0};
    for (bool linked : {false, true}) {
        const auto r = update_phi_pair(zero, zero, linked, Matrix(3, 3, 0.4), EStepConfig{});
        CHECK(r.converged);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(r.send[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
            CHECK(r.recv[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("dominant membership fixes the sender role") {
    const auto r = update_phi_pair(std::vector<double>{10.0, -10.0}, std::vector<double>{0.3, -0.2}, true,
                                   two_role_B(0.7, 0.2, 0.3, 0.6), EStepConfig{});
    CHECK(std::abs(r.send[0] - 1.0) < 1e-4);
    CHECK(std::abs(r.send[1]) < 1e-4);
}

TEST_CASE("phi fixed point matches bisection on the simplex product") {
    const Matrix B = two_role_B(0.9, 0.1, 0.1, 0.8);
    const double lb[2][2] = {{std::log(0.9), std::log(0.1)}, {std::log(0.1), std::log(0.8)}};
    // send = F(recv), recv = G(send), with both expressed as role-0 mass.
    auto F = [&](double y) { return sigmoid(y * (lb[0][0] - lb[1][0]) + (1.0 - y) * (lb[0][1] - lb[1][1])); };
    auto G = [&](double x) { return sigmoid(x * (lb[0][0] - lb[0][1]) + (1.0 - x) * (lb[1][0] - lb[1][1])); };
    auto h = [&](double x) { return x - F(G(x)); };
    // scan for sign changes, then bisect each to 1e-12
    std::vector<double> roots;
    const int grid = 10000;
    for (int i = 0; i < grid; ++i) {
        double lo = static_cast<double>(i) / grid, hi = static_cast<double>(i + 1) / grid;
        if (h(lo) * h(hi) > 0.0) continue;
        while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            (h(lo) * h(mid) <= 0.0 ? hi : lo) = mid;
        }
        roots.push_back(0.5 * (lo + hi));
    }
    REQUIRE(roots.size() == 1);
    const double x = roots.front();
    EStepConfig config;
    config.phi_tol = 1e-13;
    const auto r = update_phi_pair(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}, true, B, config);
    CHECK(r.converged);
    CHECK(std::abs(r.send[0] - x) < 1e-8);
    CHECK(std::abs(r.recv[0] - G(x)) < 1e-8);
}

TEST_CASE("phi solver reports non-convergence at its cap") {
    EStepConfig config;
    config.max_inner_iters = 1;
    const auto r = update_phi_pair(std::vector<double>{0.2, 0.0}, std::vector<double>{0.0, 0.4}, true,
                                   two_role_B(0.9, 0.1, 0.1, 0.8), config);
    CHECK_FALSE(r.converged);
    CHECK(r.send[0] + r.send[1] == doctest::Approx(1.0));
}

TEST_CASE("sigma reduces to the closed form without couplings") {
    DynamicNetwork Y;
    Y.snapshots.assign(3, Snapshot(2));
    auto params = ModelParams::defaults(2, 2);
    params.beta.assign(2, 0.0);
    params.sigma_mu = {0.3, 0.7};
    const Model model(Y, params);
    auto vs = VariationalState::make(2, 2, 3);
    vs.zeta(1, 0) = 1e250;  // suppresses the bound term
    for (std::size_t k = 0; k < 2; ++k) {
        const double sd = solve_sigma(model, vs, 0, 1, k);
        CHECK(sd * sd == doctest::Approx(params.sigma_mu[k] / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("sigma root decreases as gamma grows") {
    Rng rng(12);
    auto in = random_instance(rng, 4, 3, 3);
    const Model model(in.Y, in.params);
    double previous = INFINITY;
    for (double g = -2.0; g <= 2.0; g += 0.5) {
        in.vs.gamma[1](2, 1) = g;
        const double s = solve_sigma(model, in.vs, 2, 1, 1);
        CHECK(s < previous);
        previous = s;
    }
}

TEST_CASE("sigma residual is the scaled derivative of the objective") {
    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        auto in = random_instance(rng, 4, 2, 3);
        const Model model(in.Y, in.params);
        const std::size_t p = rep % 4, t = rep % 3, k = rep % 2;
        // d ELBO / d s with s = sigma^2, by central differences
        const double s = in.vs.sigma[t](p, k) * in.vs.sigma[t](p, k);
        const double h = 1e-6;
        auto at = [&](double v) {
            auto vs = in.vs;
            vs.sigma[t](p, k) = std::sqrt(v);
            return elbo(model, vs);
        };
        const double deriv = (at(s + h) - at(s - h)) / (2.0 * h);
        CHECK(sigma_residual(model, in.vs, p, t, k) == doctest::Approx(2.0 * s * deriv).epsilon(1e-6));
    }
}

TEST_CASE("sigma solver agrees with a grid scan of the residual") {
    Rng rng(14);
    for (int rep = 0; rep < 5; ++rep) {
        auto in = random_instance(rng, 4, 3, 3);
        const Model model(in.Y, in.params);
        const std::size_t p = rep % 4, t = rep % 3, k = rep % 3;
        auto residual = [&](double sd) {
            auto vs = in.vs;
            vs.sigma[t](p, k) = sd;
            return sigma_residual(model, vs, p, t, k);
        };
        const int grid = 1000000;
        const double top = 10.0;
        double lo = 0.0, hi = 0.0;
        for (int i = 1; i <= grid; ++i) {
            const double a = top * (i - 1) / grid + 1e-12, b = top * i / grid;
            if (residual(a) >= 0.0 && residual(b) <= 0.0) {
                lo = a;
                hi = b;
                break;
            }
        }
        REQUIRE(hi > 0.0);
        while (hi - lo > 1e-13) {
            const double mid = 0.5 * (lo + hi);
            (residual(mid) >= 0.0 ? lo : hi) = mid;
        }
        CHECK(std::abs(solve_sigma(model, in.vs, p, t, k) - 0.5 * (lo + hi)) < 1e-9);
        in.vs.sigma[t](p, k) = solve_sigma(model, in.vs, p, t, k);
        CHECK(std::abs(sigma_residual(model, in.vs, p, t, k)) < 1e-10);
    }
}

TEST_CASE("gamma of an isolated node sits at the prior mean") {
    DynamicNetwork Y;
    Y.snapshots = {Snapshot(1)};
    auto params = ModelParams::defaults(1, 3);
    params.alpha0 = {0.5, -1.0, 2.0};
    const Model model(Y, params);
    const auto vs = VariationalState::make(1, 3, 1);
    const auto g = update_gamma(model, vs, 0, 0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(params.alpha0[k]).epsilon(1e-10));
}

TEST_CASE("gamma update is stationary and matches a derivative-free optimiser") {
    Rng rng(15);
    for (int rep = 0; rep < 4; ++rep) {
        auto in = random_instance(rng, 2, 2, 2);
        const Model model(in.Y, in.params);
        const std::size_t p = rep % 2, t = rep / 2;
        const auto g = update_gamma(model, in.vs, p, t);
        auto solved = in.vs;
        std::copy(g.begin(), g.end(), solved.gamma[t].row(p).begin());
        for (double d : elbo_grad_gamma(model, solved, p, t)) CHECK(std::abs(d) <= 1e-6);

        auto objective = [&](const std::vector<double>& x) {
            auto vs = in.vs;
            std::copy(x.begin(), x.end(), vs.gamma[t].row(p).begin());
            return elbo(model, vs);
        };
        const auto best = nelder_mead_max(objective, {in.vs.gamma[t](p, 0), in.vs.gamma[t](p, 1)}, 0.5, 400);
        for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(best[k] - g[k]) < 1e-5);
    }
}

TEST_CASE("joint gamma and zeta update improves the objective") {
    Rng rng(16);
    auto in = random_instance(rng, 4, 3, 3);
    const Model model(in.Y, in.params);
    const double before = elbo(model, in.vs);
    const auto gz = update_gamma_zeta(model, in.vs, 1, 1);
    auto vs = in.vs;
    std::copy(gz.gamma.begin(), gz.gamma.end(), vs.gamma[1].row(1).begin());
    vs.zeta(1, 1) = gz.zeta;
    CHECK(elbo(model, vs) >= before);
    CHECK(gz.zeta == doctest::Approx(update_zeta(vs, 1, 1)).epsilon(1e-12));
}

TEST_CASE("zeta closed form") {
    auto vs = VariationalState::make(1, 3, 1);
    for (std::size_t k = 0; k < 3; ++k) vs.sigma[0](0, k) = 1e-9;
    CHECK(update_zeta(vs, 0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    auto one = VariationalState::make(1, 1, 1);
    one.gamma[0](0, 0) = 1.0;
    one.sigma[0](0, 0) = std::sqrt(2.0);
    CHECK(update_zeta(one, 0, 0) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));

    Rng rng(17);
    auto in = random_instance(rng, 3, 2, 2);
    in.vs.zeta(0, 1) *= 1.7;
    const Model model(in.Y, in.params);
    const double before = elbo(model, in.vs);
    in.vs.zeta(0, 1) = update_zeta(in.vs, 1, 0);
    CHECK(elbo(model, in.vs) > before);
    const double at_optimum = elbo(model, in.vs);
    in.vs.zeta(0, 1) = update_zeta(in.vs, 1, 0);
    CHECK(elbo(model, in.vs) == at_optimum);
}

TEST_CASE("every update type weakly increases the objective") {
    Rng rng(18);
    for (int rep = 0; rep < 3; ++rep) {
        auto in = random_instance(rng, 5, 2 + rep % 2, 3);
        const Model model(in.Y, in.params);
        EStepConfig config;
        config.accelerate = false;
        config.max_sweeps = 30;
        auto vs = in.vs;
        double last = elbo(model, vs);
        int updates = 0;
        bool monotone = true;
        config.on_update = [&](std::string_view, std::size_t) {
            const double now = elbo(model, vs);
            if (now < last - 1e-8) monotone = false;
            last = now;
            ++updates;
        };
        run_estep(model, vs, config);
        CHECK(monotone);
        CHECK(updates > 0);
    }
}

TEST_CASE("converged E-step is stationary, valid and idempotent") {
    Rng rng(19);
    auto in = random_instance(rng, 6, 3, 4);
    const Model model(in.Y, in.params);
    auto vs = in.vs;
    const auto first = run_estep(model, vs);
    REQUIRE(first.converged);
    CHECK(first.stationarity.max_sigma_residual < 1e-10);
    CHECK(first.stationarity.max_gamma_grad < 1e-6);
    CHECK_NOTHROW(vs.validate());
    const auto check = stationarity(model, vs);
    CHECK(check.max_sigma_residual == first.stationarity.max_sigma_residual);

    auto again = vs;
    const auto second = run_estep(model, again);
    CHECK(second.converged);
    CHECK(second.max_change < 1e-8);
    double drift = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t i = 0; i < vs.gamma[t].values().size(); ++i) {
            drift = std::max(drift, std::abs(vs.gamma[t].values()[i] - again.gamma[t].values()[i]));
        }
    }
    CHECK(drift < 1e-6);
}

TEST_CASE("uninformative links keep phi uniform") {
    Rng rng(20);
    auto Y = random_network(rng, 6, 3, 0.5);
    auto params = ModelParams::defaults(6, 3);
    params.B = Matrix(3, 3, 0.5);
    const Model model(Y, params);
    auto vs = VariationalState::make(6, 3, 3);
    REQUIRE(run_estep(model, vs).converged);
    for (double x : vs.phi_send.values()) {
        if (x != 0.0) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
    }
    for (double x : vs.phi_recv.values()) {
        if (x != 0.0) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
    }
}

TEST_CASE("E-step recovers near-degenerate memberships") {
    BenchmarkOptions o;
    o.N = 30;
    o.K = 3;
    o.T = 2;
    o.seed = 5;
    o.prior_var = 0.01;
    o.peakedness = 0.97;
    o.b_diag = 0.95;
    o.b_off = 0.02;
    o.noise_var = 0.01;
    const auto config = benchmark_config(o);
    const auto truth = generate_sequence(config);
    const Model model(truth.network, config.params);
    // A uniform start is a symmetric stationary point, so begin from the
    // spectral guess and compare up to a relabelling of roles.
    FitConfig fit_config;
    fit_config.K = o.K;
    auto vs = initial_guess(truth.network, fit_config, 0).vs;
    REQUIRE(run_estep(model, vs).converged);
    const auto traj =
        permute_roles(posterior_trajectories(vs), best_role_permutation(posterior_trajectories(vs), truth.memberships.pi));
    int agree = 0, total = 0;
    for (std::size_t t = 0; t <= o.T; ++t) {
        for (std::size_t p = 0; p < o.N; ++p) {
            auto arg = [&](const Matrix& m) {
                const auto row = m.row(p);
                return std::max_element(row.begin(), row.end()) - row.begin();
            };
            agree += arg(traj[t]) == arg(truth.memberships.pi[t]);
            ++total;
        }
    }
    CHECK(agree >= 0.95 * total);
}

TEST_CASE("configuration validation") {
    EStepConfig config;
    CHECK_NOTHROW(config.validate());
    config.phi_tol = 0.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = EStepConfig{};
    config.max_inner_iters = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = EStepConfig{};
    config.damping = 1.5;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
