#pragma once

// Evidence lower bound for the factorised variational family and its exact
// gradients. The derivation lives in docs/derivation.md.

#include <cstddef>
#include <span>
#include <vector>

#include "coevnet/model.hpp"

namespace coevnet {

/// Mean-field variational parameters. gamma/sigma are Gaussian means and
/// standard deviations of mu; zeta(t, p) anchors the log-sum-exp bound.
struct VariationalState {
    NodeSeries gamma;
    NodeSeries sigma;
    Matrix zeta;  // (T+1) x N
    PairSeries phi_send;
    PairSeries phi_recv;

    /// gamma = 0, sigma = 1, uniform phi, zeta at its optimum.
    static VariationalState make(std::size_t n, std::size_t k, std::size_t times);

    std::size_t num_times() const { return gamma.size(); }
    std::size_t num_nodes() const { return gamma.empty() ? 0 : gamma.front().rows(); }
    std::size_t num_roles() const { return gamma.empty() ? 0 : gamma.front().cols(); }

    /// Throws std::invalid_argument if shapes disagree, phi leaves the
    /// simplex (1e-10), or sigma/zeta are not strictly positive.
    void validate() const;

    bool operator==(const VariationalState&) const = default;
};

/// The ELBO split by origin; `total` is their sum.
struct ElboTerms {
    double prior = 0.0;
    double transition = 0.0;
    double pairs = 0.0;       // role-indicator and link terms
    double bound = 0.0;       // -count * E[C(mu)] upper bound
    double entropy = 0.0;     // Gaussian and multinomial entropies
    double total = 0.0;
};

ElboTerms elbo_terms(const Model& model, const VariationalState& vs);
double elbo(const Model& model, const VariationalState& vs);
double elbo(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params);

/// Number of times E[C(mu_p^t)] enters the objective: once per ordered
/// pair in which p sends and once per pair in which p receives.
double bound_multiplicity(std::size_t num_nodes);

/// E[log f_G] of one transition given its residual mean and variance.
double expected_transition_log_density(std::span<const double> mean_residual,
                                       std::span<const double> residual_variance,
                                       std::span<const double> sigma_mu);

/// The part of the ELBO in gamma_p^t other than the log-sum-exp bound is a
/// separable concave quadratic sum_k linear_k g_k - precision_k g_k^2 / 2.
struct GammaQuadratic {
    std::vector<double> linear;
    std::vector<double> precision;
};

GammaQuadratic gamma_quadratic(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t);

/// Precision multiplying sigma^2 in the ELBO for node p at time t.
std::vector<double> node_precision(const Model& model, std::size_t p, std::size_t t);

std::vector<double> elbo_grad_gamma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t);
std::vector<double> elbo_grad_gamma(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params,
                                    std::size_t p, std::size_t t);

struct InfluenceGradient {
    std::vector<double> beta;
    Matrix w;
};

/// Partials of the expected transition term with respect to every beta_p
/// and raw weight w(p,q), through the weight renormalisation.
InfluenceGradient elbo_grad_influence(const Model& model, const VariationalState& vs);
InfluenceGradient elbo_grad_influence(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params);

/// Expected transition log density of node p summed over t = 1..T, for a
/// candidate beta_p and raw weight row w_p. Used by the influence M-step.
double node_transition_term(const DynamicNetwork& Y, const VariationalState& vs,
                            std::span<const double> sigma_mu, std::size_t p, double beta,
                            std::span<const double> w_row);

struct NodeInfluenceGradient {
    double beta = 0.0;
    std::vector<double> w;  // length N
};

NodeInfluenceGradient node_transition_gradient(const DynamicNetwork& Y, const VariationalState& vs,
                                               std::span<const double> sigma_mu, std::size_t p, double beta,
                                               std::span<const double> w_row);

/// Pair objective of one (p, q, t) as a function of its two role
/// posteriors, excluding terms constant in phi.
double pair_objective(std::span<const double> phi_send, std::span<const double> phi_recv,
                      std::span<const double> gamma_p, std::span<const double> gamma_q, bool linked,
                      const Matrix& B_eff);

}  // namespace coevnet
