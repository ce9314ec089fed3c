#pragma once

// Random instances and small helpers shared by the unit tests and the
// acceptance binary.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "coevnet/elbo.hpp"
#include "coevnet/estep.hpp"

namespace coevnet::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline std::vector<double> random_simplex(Rng& rng, std::size_t k) {
    std::vector<double> v(k);
    double total = 0.0;
    for (auto& x : v) total += (x = uniform(rng, 0.05, 1.0));
    for (auto& x : v) x /= total;
    return v;
}

inline DynamicNetwork random_network(Rng& rng, std::size_t n, std::size_t times, double density) {
    DynamicNetwork Y;
    for (std::size_t t = 0; t < times; ++t) {
        Snapshot s(n);
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (p != q && uniform(rng, 0.0, 1.0) < density) s.set(p, q);
            }
        }
        Y.snapshots.push_back(s);
    }
    return Y;
}

inline ModelParams random_params(Rng& rng, std::size_t n, std::size_t k) {
    auto params = ModelParams::defaults(n, k);
    for (auto& b : params.B.values()) b = uniform(rng, 0.1, 0.9);
    for (auto& b : params.beta) b = uniform(rng, 0.1, 0.9);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) params.w(p, q) = p == q ? 0.0 : uniform(rng, 0.3, 2.0);
    }
    for (auto& s : params.sigma_mu) s = uniform(rng, 0.2, 1.0);
    for (auto& a : params.A) a = uniform(rng, 0.5, 2.0);
    for (auto& a : params.alpha0) a = uniform(rng, -0.5, 0.5);
    params.rho = uniform(rng, 0.0, 0.3);
    return params;
}

inline VariationalState random_state(Rng& rng, std::size_t n, std::size_t k, std::size_t times) {
    auto vs = VariationalState::make(n, k, times);
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < k; ++c) {
                vs.gamma[t](p, c) = normal(rng);
                vs.sigma[t](p, c) = uniform(rng, 0.2, 0.9);
            }
            for (std::size_t q = 0; q < n; ++q) {
                if (p == q) continue;
                const auto a = random_simplex(rng, k);
                const auto b = random_simplex(rng, k);
                std::copy(a.begin(), a.end(), vs.phi_send.at(t, p, q).begin());
                std::copy(b.begin(), b.end(), vs.phi_recv.at(t, p, q).begin());
            }
            vs.zeta(t, p) = update_zeta(vs, p, t);
        }
    }
    return vs;
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("coevnet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace coevnet::testing
