#pragma once

// M-step: closed-form updates for B, the transition noise and the prior, and
// projected ascent for the influence parameters.

#include <utility>
#include <vector>

#include "coevnet/elbo.hpp"

namespace coevnet {

struct MStepConfig {
    double influence_step = 1e-2;
    int influence_iters = 200;
    double influence_grad_tol = 1e-6;

    void validate() const;
};

inline constexpr double kVarianceFloor = 1e-6;

struct BUpdate {
    Matrix B;
    // Cells whose denominator vanished; they keep their previous value.
    std::vector<std::pair<std::size_t, std::size_t>> empty_cells;
};

/// Ratio of phi-weighted link counts to phi-weighted pair counts, divided by
/// (1 - rho) and clamped to [1e-9, 1 - 1e-9].
BUpdate update_B(const DynamicNetwork& Y, const VariationalState& vs, const Matrix& previous, double rho = 0.0);

/// Un-clamped ratio, for inspection and tests.
Matrix B_ratio(const DynamicNetwork& Y, const VariationalState& vs);

/// Per-role mean of E_q[(mu^t - f_b(...))^2] over every node and transition
/// t = 1..T; floored at kVarianceFloor.
std::vector<double> update_eta(const Model& model, const VariationalState& vs);

/// Same, without the floor.
std::vector<double> expected_squared_residual(const Model& model, const VariationalState& vs);

struct PriorUpdate {
    std::vector<double> alpha0;
    std::vector<double> a;  // standard deviations; A = a^2
};

/// Prior mean and per-role standard deviation from the t = 0 posteriors (or
/// from every snapshot when `all_times`). a is floored at kVarianceFloor.
PriorUpdate update_prior(const VariationalState& vs, bool all_times = false);

struct InfluenceUpdate {
    std::vector<double> beta;
    Matrix w;
    bool converged = true;
    int iterations = 0;
};

/// Projected ascent on the expected transition term over beta in [0,1]^N
/// and w >= 0. Each node is solved independently: an exact beta step
/// (concave quadratic, clamped) alternates with a backtracking projected
/// gradient step on w. Rows of w are rescaled afterwards so the weights over
/// each node's ever-active neighbours sum to their count.
InfluenceUpdate update_influence(const Model& model, const VariationalState& vs, const MStepConfig& config = {});

}  // namespace coevnet
