#pragma once

// Variational EM driver: initialisation, alternating E/M steps, restarts and
// fit reporting.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "coevnet/estep.hpp"
#include "coevnet/mstep.hpp"

namespace coevnet {

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitConfig {
    std::size_t K = 2;
    int max_em_iters = 100;
    double em_tol = 1e-6;  // relative ELBO gain that ends a chain
    int restarts = 5;
    std::uint64_t seed = 0;
    EStepConfig estep;
    MStepConfig mstep;
    double rho = 0.0;
    bool learn_influence = true;
    double beta_init = 0.2;
    double noise_init = 0.1;
    double init_jitter = 0.1;

    void validate() const;
};

struct FitFlags {
    bool converged = false;
    int iterations = 0;
    int chosen_restart = 0;
    std::vector<double> chain_elbos;   // final ELBO per restart (NaN if it diverged)
    int estep_unconverged = 0;         // E-steps that hit their sweep cap
    bool influence_converged = true;
    bool last_estep_converged = false;
    StationarityReport stationarity;   // at the last E-step
    std::vector<std::string> diagnostics;
};

struct FitReport {
    ModelParams params;
    VariationalState vs;
    std::vector<double> elbo_trace;  // after each EM iteration
    NodeSeries trajectories;         // posterior membership per node and time
    FitFlags flags;
};

/// How trajectories are derived from the variational posterior.
inline constexpr const char* kMembershipMap = "softmax(gamma + sigma^2/2)";

/// Per-node, per-time membership vectors exp(gamma + sigma^2/2) / zeta.
NodeSeries posterior_trajectories(const VariationalState& vs);

struct InitialGuess {
    ModelParams params;
    VariationalState vs;
};

/// Spectral initialisation of one restart: k-means on the leading
/// eigenvectors of the symmetrised time-averaged adjacency assigns each node
/// a role; gamma is peaked on that role (plus seeded jitter), B starts at the
/// empirical block densities, beta and w start uniform.
InitialGuess initial_guess(const DynamicNetwork& Y, const FitConfig& config, int restart, bool static_slices = false);

/// One EM chain from a given starting point.
FitReport fit_chain(const DynamicNetwork& Y, const FitConfig& config, InitialGuess start);

/// Runs `restarts` seeded chains (concurrently, up to COEVNET_THREADS) and
/// returns the one with the highest final ELBO, roles aligned to restart 0.
FitReport fit(const DynamicNetwork& Y, const FitConfig& config);

/// Baseline without cross-time coupling: every snapshot draws its
/// memberships from the shared prior; B and the prior are shared.
FitReport static_baseline_fit(const DynamicNetwork& Y, const FitConfig& config);

/// Permutation perm such that inferred role perm[k] corresponds to
/// reference role k, minimising the mean L2 distance over nodes and times.
std::vector<std::size_t> best_role_permutation(const NodeSeries& inferred, const NodeSeries& reference);

/// Relabel roles: new role k takes old role perm[k].
void permute_roles(FitReport& report, const std::vector<std::size_t>& perm);
void permute_roles(VariationalState& vs, const std::vector<std::size_t>& perm);
void permute_roles(ModelParams& params, const std::vector<std::size_t>& perm);
NodeSeries permute_roles(const NodeSeries& series, const std::vector<std::size_t>& perm);

/// Align a report to reference trajectories; returns the permutation used.
std::vector<std::size_t> align_to(FitReport& report, const NodeSeries& reference);

}  // namespace coevnet
