#pragma once

// Domain types and the deterministic primitives shared by the generator and
// the variational inference code.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coevnet/arrays.hpp"

namespace coevnet {

/// A length-(T+1) sequence of directed adjacency snapshots over a fixed
/// node set.
struct DynamicNetwork {
    std::vector<Snapshot> snapshots;
    std::vector<std::string> node_labels;  // empty, or one label per node

    std::size_t num_nodes() const { return snapshots.empty() ? 0 : snapshots.front().size(); }
    std::size_t num_snapshots() const { return snapshots.size(); }
    /// Index of the last snapshot (T).
    std::size_t last_time() const { return snapshots.size() - 1; }

    /// Throws std::invalid_argument on ragged snapshots, self-loops or a
    /// label count that does not match the node count.
    void validate() const;

    bool operator==(const DynamicNetwork&) const = default;
};

/// Model parameters. Covariances are diagonal and stored as variances.
struct ModelParams {
    Matrix B;                       // K x K role compatibility, entries in [0,1]
    std::vector<double> beta;       // per-node susceptibility in [0,1]
    Matrix w;                       // N x N raw influence weights; w(p,q) is q's weight on p
    std::vector<double> sigma_mu;   // transition noise variances eta_k^2
    std::vector<double> alpha0;     // prior mean of mu at t = 0
    std::vector<double> A;          // prior variances a_k^2
    double rho = 0.0;               // sparsity, in [0,1)
    // Baseline variant: every snapshot draws mu from the prior independently
    // and there are no transition terms.
    bool static_slices = false;

    std::size_t num_roles() const { return B.rows(); }
    std::size_t num_nodes() const { return beta.size(); }

    /// Parameters with uniform beta, unit weights and the given K/N shapes.
    static ModelParams defaults(std::size_t n, std::size_t k);

    void validate() const;

    bool operator==(const ModelParams&) const = default;
};

/// Natural parameters and their simplex images for every node and time.
struct MembershipState {
    NodeSeries mu;
    NodeSeries pi;

    static MembershipState from_natural(NodeSeries mu);
};

/// Role indicators stored as role indices; entry (t, p, q) of send is the
/// role p takes when sending to q. Diagonal entries are -1.
struct RoleIndicators {
    std::size_t times = 0;
    std::size_t nodes = 0;
    std::vector<int> send;
    std::vector<int> recv;

    RoleIndicators() = default;
    RoleIndicators(std::size_t t, std::size_t n)
        : times(t), nodes(n), send(t * n * n, -1), recv(t * n * n, -1) {}

    int& send_role(std::size_t t, std::size_t p, std::size_t q) { return send[(t * nodes + p) * nodes + q]; }
    int& recv_role(std::size_t t, std::size_t p, std::size_t q) { return recv[(t * nodes + p) * nodes + q]; }
    int send_role(std::size_t t, std::size_t p, std::size_t q) const { return send[(t * nodes + p) * nodes + q]; }
    int recv_role(std::size_t t, std::size_t p, std::size_t q) const { return recv[(t * nodes + p) * nodes + q]; }

    bool operator==(const RoleIndicators&) const = default;
};

double log_sum_exp(std::span<const double> x);

/// exp(mu_k - C(mu)) computed with a max shift. Throws std::invalid_argument
/// on non-finite input.
std::vector<double> softmax_from_natural(std::span<const double> mu);

/// Weighted neighbour mean over p's out-neighbours in Y, with the raw
/// weights renormalised over the active neighbours. Returns nullopt when p
/// has no out-neighbours.
std::optional<std::vector<double>> neighborhood_mean(const Matrix& mu_all, const Snapshot& Y,
                                                     const Matrix& w, std::size_t p);

/// (1 - beta) mu_p + beta mu_S.
std::vector<double> influence_mean(std::span<const double> mu_p, std::span<const double> mu_s,
                                   double beta);

/// (1 - rho) pi_p^T B pi_q.
double marginal_link_prob(std::span<const double> pi_p, std::span<const double> pi_q,
                          const Matrix& B, double rho);

/// Diagonal Gaussian log density of mu_next around influence_mean(...).
double transition_log_density(std::span<const double> mu_next, std::span<const double> mu_p,
                              std::span<const double> mu_s, double beta,
                              std::span<const double> sigma_mu);

/// Renormalised influence weights of one node at one snapshot.
struct Neighbor {
    std::size_t node;
    double weight;
};

/// Per-snapshot neighbourhoods with renormalised weights, in both
/// directions: influencers(t, p) lists q with Y_t(p,q) = 1 and weight
/// w~_{p<-q}; influencees(t, q) lists the same entries keyed by q.
class Neighborhoods {
public:
    Neighborhoods() = default;
    Neighborhoods(const DynamicNetwork& network, const Matrix& w);

    const std::vector<Neighbor>& influencers(std::size_t t, std::size_t p) const { return out_[t][p]; }
    const std::vector<Neighbor>& influencees(std::size_t t, std::size_t q) const { return in_[t][q]; }

    /// Raw weight sum over p's active neighbours at t (0 if none).
    double weight_total(std::size_t t, std::size_t p) const { return totals_[t][p]; }

private:
    std::vector<std::vector<std::vector<Neighbor>>> out_;
    std::vector<std::vector<std::vector<Neighbor>>> in_;
    std::vector<std::vector<double>> totals_;
};

/// Model parameters bound to an observed network, with the derived
/// neighbourhood weights cached. Keeps a reference to the network.
class Model {
public:
    Model(const DynamicNetwork& network, ModelParams params);

    const DynamicNetwork& network() const { return *network_; }
    const ModelParams& params() const { return params_; }
    const Neighborhoods& neighborhoods() const { return neighborhoods_; }

    std::size_t num_nodes() const { return network_->num_nodes(); }
    std::size_t num_roles() const { return params_.num_roles(); }
    std::size_t last_time() const { return network_->last_time(); }

    /// beta_p when p has out-neighbours at snapshot t, 0 otherwise.
    double effective_beta(std::size_t t, std::size_t p) const;

    /// Clamped (1 - rho) B used by the link likelihood terms.
    const Matrix& effective_B() const { return effective_B_; }

    void set_params(ModelParams params);

private:
    const DynamicNetwork* network_;
    ModelParams params_;
    Neighborhoods neighborhoods_;
    Matrix effective_B_;
};

inline constexpr double kMinLinkProb = 1e-9;

}  // namespace coevnet
