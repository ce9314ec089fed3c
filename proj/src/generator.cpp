#include "coevnet/generator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "coevnet/numerics.hpp"

namespace coevnet {

namespace {

enum Stage : std::uint64_t { kInit = 1, kTransition = 2, kSnapshot = 3 };

int sample_role(std::span<const double> pi, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < pi.size(); ++k) {
        acc += pi[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(pi.size() - 1);
}

}  // namespace

void GenConfig::validate() const {
    if (N < 2 || K < 2) throw std::invalid_argument("generator needs N >= 2 and K >= 2");
    params.validate();
    if (params.num_nodes() != N || params.num_roles() != K) {
        throw std::invalid_argument("generator params do not match N/K");
    }
    if (peakedness && (*peakedness <= 1.0 / static_cast<double>(K) || *peakedness >= 1.0)) {
        throw std::invalid_argument("peakedness must lie in (1/K, 1)");
    }
}

GenConfig benchmark_config(const BenchmarkOptions& o) {
    GenConfig config;
    config.N = o.N;
    config.K = o.K;
    config.T = o.T;
    config.seed = o.seed;
    config.peakedness = o.peakedness;
    auto& params = config.params;
    params = ModelParams::defaults(o.N, o.K);
    for (std::size_t g = 0; g < o.K; ++g) {
        for (std::size_t h = 0; h < o.K; ++h) params.B(g, h) = g == h ? o.b_diag : o.b_off;
    }
    params.beta.assign(o.N, o.beta);
    params.sigma_mu.assign(o.K, o.noise_var);
    params.A.assign(o.K, o.prior_var);
    params.rho = o.rho;
    return config;
}

std::vector<double> initial_mean(const GenConfig& config, std::size_t p) {
    std::vector<double> mean = config.params.alpha0;
    if (!config.peakedness) return mean;
    // softmax puts `peak` on the home role when the others sit `gap` lower.
    const double peak = *config.peakedness;
    const double k = static_cast<double>(config.K);
    const double gap = std::log((k - 1.0) * peak / (1.0 - peak));
    const std::size_t home = p % config.K;
    for (std::size_t r = 0; r < config.K; ++r) {
        if (r != home) mean[r] -= gap;
    }
    return mean;
}

Matrix sample_initial_state(const GenConfig& config) {
    config.validate();
    Matrix mu(config.N, config.K);
    for (std::size_t p = 0; p < config.N; ++p) {
        auto rng = substream(config.seed, {kInit, p});
        std::normal_distribution<double> normal(0.0, 1.0);
        const auto mean = initial_mean(config, p);
        for (std::size_t k = 0; k < config.K; ++k) {
            mu(p, k) = mean[k] + std::sqrt(config.params.A[k]) * normal(rng);
        }
    }
    return mu;
}

Matrix step_memberships(const Matrix& mu_t, const Snapshot& Y_t, const ModelParams& params, std::uint64_t seed,
                        std::size_t t) {
    const std::size_t n = mu_t.rows();
    const std::size_t k = mu_t.cols();
    Matrix next(n, k);
    for (std::size_t p = 0; p < n; ++p) {
        const auto neigh = neighborhood_mean(mu_t, Y_t, params.w, p);
        std::vector<double> mean;
        if (neigh) {
            mean = influence_mean(mu_t.row(p), *neigh, params.beta[p]);
        } else {
            mean.assign(mu_t.row(p).begin(), mu_t.row(p).end());
        }
        auto rng = substream(seed, {kTransition, t, p});
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t c = 0; c < k; ++c) {
            next(p, c) = mean[c] + std::sqrt(params.sigma_mu[c]) * normal(rng);
        }
    }
    return next;
}

SampledSnapshot sample_snapshot(const Matrix& pi_t, const ModelParams& params, std::uint64_t seed, std::size_t t) {
    const std::size_t n = pi_t.rows();
    SampledSnapshot out{Snapshot(n), std::vector<int>(n * n, -1), std::vector<int>(n * n, -1)};
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            auto rng = substream(seed, {kSnapshot, t, p, q});
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            const int g = sample_role(pi_t.row(p), unif(rng));
            const int h = sample_role(pi_t.row(q), unif(rng));
            const double prob = (1.0 - params.rho) * params.B(static_cast<std::size_t>(g), static_cast<std::size_t>(h));
            out.send[p * n + q] = g;
            out.recv[p * n + q] = h;
            if (unif(rng) < prob) out.links.set(p, q);
        }
    }
    return out;
}

GroundTruth generate_sequence(const GenConfig& config) {
    config.validate();
    const std::size_t times = config.T + 1;
    NodeSeries mu;
    mu.reserve(times);
    mu.push_back(sample_initial_state(config));

    GroundTruth truth;
    truth.indicators = RoleIndicators(times, config.N);
    truth.network.snapshots.reserve(times);
    for (std::size_t p = 0; p < config.N; ++p) truth.network.node_labels.push_back("n" + std::to_string(p));

    for (std::size_t t = 0; t < times; ++t) {
        Matrix pi(config.N, config.K);
        for (std::size_t p = 0; p < config.N; ++p) {
            const auto row = softmax_from_natural(mu[t].row(p));
            std::copy(row.begin(), row.end(), pi.row(p).begin());
        }
        auto snap = sample_snapshot(pi, config.params, config.seed, t);
        for (std::size_t p = 0; p < config.N; ++p) {
            for (std::size_t q = 0; q < config.N; ++q) {
                truth.indicators.send_role(t, p, q) = snap.send[p * config.N + q];
                truth.indicators.recv_role(t, p, q) = snap.recv[p * config.N + q];
            }
        }
        truth.network.snapshots.push_back(std::move(snap.links));
        if (t + 1 < times) {
            mu.push_back(step_memberships(mu[t], truth.network.snapshots[t], config.params, config.seed, t));
        }
    }
    truth.memberships = MembershipState::from_natural(std::move(mu));
    return truth;
}

}  // namespace coevnet
