#pragma once

// Coordinate-ascent E-step: role posteriors per pair, Gaussian variances and
// means per node, and the log-sum-exp anchors.

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "coevnet/elbo.hpp"

namespace coevnet {

struct EStepConfig {
    double phi_tol = 1e-8;
    double gamma_tol = 1e-8;
    double sigma_tol = 1e-8;
    int max_inner_iters = 500;
    int max_sweeps = 500;
    // Squared extrapolation across sweeps (SQUAREM). A jump is kept only if
    // the ELBO after it beats the plain iterate, so ascent is preserved at
    // the sweep level. Turn off to audit individual updates.
    bool accelerate = true;
    // Initial Newton step length for gamma; halved while the ELBO decreases.
    double damping = 1.0;
    // Convergence also requires the stationarity conditions to hold.
    double sigma_residual_tol = 1e-11;
    double gamma_grad_tol = 1e-7;
    // Called after each update type ("phi", "sigma", "gamma", "zeta") with
    // the time step; lets tests audit monotonicity. Unset in normal use.
    std::function<void(std::string_view, std::size_t)> on_update;

    void validate() const;
};

struct PhiResult {
    std::vector<double> send;
    std::vector<double> recv;
    bool converged = false;
    int iterations = 0;
};

/// Alternating fixed point for one pair's role posteriors. Starts from
/// uniform 1/K unless a warm start is given.
PhiResult update_phi_pair(std::span<const double> gamma_p, std::span<const double> gamma_q, bool linked,
                          const Matrix& B_eff, const EStepConfig& config,
                          std::optional<std::pair<std::span<const double>, std::span<const double>>> warm = {});

/// Root of the sigma stationarity condition for component k of node p at
/// time t with zeta held fixed. Returns the standard deviation.
double solve_sigma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t, std::size_t k);

/// 1 - s P - s c exp(gamma + s/2) / zeta with s = sigma^2: zero exactly at
/// the sigma stationarity point.
double sigma_residual(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t, std::size_t k);

/// gamma_p^t solving d ELBO / d gamma = 0 with sigma and zeta held fixed.
std::vector<double> update_gamma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                                 const EStepConfig& config = {});

/// Joint maximiser over (gamma_p^t, zeta_p^t). zeta is eliminated at its
/// optimum, leaving a concave problem in gamma solved by damped Newton.
struct GammaZeta {
    std::vector<double> gamma;
    double zeta = 0.0;
};
GammaZeta update_gamma_zeta(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                            const EStepConfig& config = {});

/// sum_k exp(gamma_k + sigma_k^2 / 2).
double update_zeta(const VariationalState& vs, std::size_t p, std::size_t t);

struct StationarityReport {
    double max_sigma_residual = 0.0;
    double max_gamma_grad = 0.0;
};
StationarityReport stationarity(const Model& model, const VariationalState& vs);

struct EStepReport {
    bool converged = false;
    int sweeps = 0;
    double max_change = 0.0;
    int phi_unconverged = 0;
    StationarityReport stationarity;
};

/// Repeats sweeps (phi for every pair and time, then every sigma, then a
/// joint Newton solve for all gamma with zeta at its optimum) until a sweep
/// moves nothing beyond tolerance and the stationarity conditions hold.
/// Updates `vs` in place.
EStepReport run_estep(const Model& model, VariationalState& vs, const EStepConfig& config = {});

}  // namespace coevnet
