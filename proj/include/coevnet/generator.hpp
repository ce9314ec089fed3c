#pragma once

// Forward simulation of co-evolving memberships and networks.

#include <cstdint>
#include <optional>

#include "coevnet/model.hpp"

namespace coevnet {

struct GenConfig {
    std::size_t N = 50;
    std::size_t K = 3;
    std::size_t T = 8;
    ModelParams params;
    std::uint64_t seed = 0;
    // When set, node p's initial mean is alpha0 shifted so that its softmax
    // puts this much mass on role p mod K. When unset every node uses alpha0.
    std::optional<double> peakedness;

    void validate() const;
};

struct GroundTruth {
    MembershipState memberships;
    RoleIndicators indicators;
    DynamicNetwork network;
};

/// Knobs for the standard synthetic benchmark (block-structured initial
/// memberships, diagonal-weighted B, isotropic prior covariance).
struct BenchmarkOptions {
    std::size_t N = 50;
    std::size_t K = 3;
    std::size_t T = 8;
    double prior_var = 3.0;
    double peakedness = 0.9;
    double b_diag = 0.9;
    double b_off = 0.1;
    double beta = 0.2;
    double noise_var = 0.1;
    double rho = 0.0;
    std::uint64_t seed = 0;
};

GenConfig benchmark_config(const BenchmarkOptions& options);

/// Per-node mean used for mu^0 under the given config.
std::vector<double> initial_mean(const GenConfig& config, std::size_t p);

/// mu_p^0 ~ Normal(initial_mean(p), A) for every node.
Matrix sample_initial_state(const GenConfig& config);

/// One transition step mu^t -> mu^{t+1}; `t` selects the noise substream.
Matrix step_memberships(const Matrix& mu_t, const Snapshot& Y_t, const ModelParams& params,
                        std::uint64_t seed, std::size_t t);

struct SampledSnapshot {
    Snapshot links;
    std::vector<int> send;  // N*N role indices, -1 on the diagonal
    std::vector<int> recv;
};

/// Role indicators and links for every ordered pair at one time step.
SampledSnapshot sample_snapshot(const Matrix& pi_t, const ModelParams& params, std::uint64_t seed,
                                std::size_t t);

GroundTruth generate_sequence(const GenConfig& config);

}  // namespace coevnet
