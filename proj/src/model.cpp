#include "coevnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace coevnet {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void DynamicNetwork::validate() const {
    require(!snapshots.empty(), "network has no snapshots");
    const std::size_t n = snapshots.front().size();
    for (const auto& s : snapshots) {
        require(s.size() == n, "snapshots disagree on node count");
        for (std::size_t p = 0; p < n; ++p) require(!s(p, p), "self-loop in snapshot");
    }
    require(node_labels.empty() || node_labels.size() == n, "node label count does not match node count");
}

ModelParams ModelParams::defaults(std::size_t n, std::size_t k) {
    ModelParams params;
    params.B = Matrix(k, k, 0.1);
    for (std::size_t g = 0; g < k; ++g) params.B(g, g) = 0.9;
    params.beta.assign(n, 0.0);
    params.w = Matrix(n, n, 1.0);
    params.sigma_mu.assign(k, 1.0);
    params.alpha0.assign(k, 0.0);
    params.A.assign(k, 1.0);
    return params;
}

void ModelParams::validate() const {
    const std::size_t k = B.rows();
    const std::size_t n = beta.size();
    require(k >= 1 && B.cols() == k, "B must be square");
    require(w.rows() == n && w.cols() == n, "w must be N x N");
    require(sigma_mu.size() == k && alpha0.size() == k && A.size() == k, "per-role vectors must have length K");
    for (double b : B.values()) require(b >= 0.0 && b <= 1.0, "B entries must lie in [0,1]");
    for (double b : beta) require(b >= 0.0 && b <= 1.0, "beta entries must lie in [0,1]");
    for (double x : w.values()) require(x >= 0.0 && std::isfinite(x), "w entries must be finite and nonnegative");
    for (double s : sigma_mu) require(s > 0.0 && std::isfinite(s), "sigma_mu entries must be positive");
    for (double a : A) require(a > 0.0 && std::isfinite(a), "A entries must be positive");
    require(all_finite(alpha0), "alpha0 must be finite");
    require(rho >= 0.0 && rho < 1.0, "rho must lie in [0,1)");
}

MembershipState MembershipState::from_natural(NodeSeries mu) {
    MembershipState state;
    state.pi = mu;
    for (std::size_t t = 0; t < mu.size(); ++t) {
        for (std::size_t p = 0; p < mu[t].rows(); ++p) {
            auto pi = softmax_from_natural(mu[t].row(p));
            std::copy(pi.begin(), pi.end(), state.pi[t].row(p).begin());
        }
    }
    state.mu = std::move(mu);
    return state;
}

double log_sum_exp(std::span<const double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

std::vector<double> softmax_from_natural(std::span<const double> mu) {
    require(!mu.empty(), "softmax of an empty vector");
    require(all_finite(mu), "softmax input must be finite");
    const double c = log_sum_exp(mu);
    std::vector<double> out(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) out[k] = std::exp(mu[k] - c);
    return out;
}

std::optional<std::vector<double>> neighborhood_mean(const Matrix& mu_all, const Snapshot& Y,
                                                     const Matrix& w, std::size_t p) {
    const std::size_t n = Y.size();
    require(mu_all.rows() == n && w.rows() == n && w.cols() == n && p < n, "neighborhood_mean: shape mismatch");
    double total = 0.0;
    std::size_t active = 0;
    for (std::size_t q = 0; q < n; ++q) {
        if (q != p && Y(p, q)) {
            total += w(p, q);
            ++active;
        }
    }
    if (active == 0) return std::nullopt;
    std::vector<double> mean(mu_all.cols(), 0.0);
    for (std::size_t q = 0; q < n; ++q) {
        if (q == p || !Y(p, q)) continue;
        const double wt = total > 0.0 ? w(p, q) / total : 1.0 / static_cast<double>(active);
        auto row = mu_all.row(q);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += wt * row[k];
    }
    return mean;
}

std::vector<double> influence_mean(std::span<const double> mu_p, std::span<const double> mu_s, double beta) {
    require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0,1]");
    require(mu_p.size() == mu_s.size(), "influence_mean: length mismatch");
    std::vector<double> out(mu_p.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - beta) * mu_p[k] + beta * mu_s[k];
    return out;
}

double marginal_link_prob(std::span<const double> pi_p, std::span<const double> pi_q, const Matrix& B, double rho) {
    const std::size_t k = B.rows();
    require(pi_p.size() == k && pi_q.size() == k, "marginal_link_prob: length mismatch");
    double total = 0.0;
    for (std::size_t g = 0; g < k; ++g) {
        double inner = 0.0;
        for (std::size_t h = 0; h < k; ++h) inner += B(g, h) * pi_q[h];
        total += pi_p[g] * inner;
    }
    return (1.0 - rho) * total;
}

double transition_log_density(std::span<const double> mu_next, std::span<const double> mu_p,
                              std::span<const double> mu_s, double beta, std::span<const double> sigma_mu) {
    require(mu_next.size() == sigma_mu.size(), "transition_log_density: length mismatch");
    for (double s : sigma_mu) require(s > 0.0, "variances must be positive");
    const auto mean = influence_mean(mu_p, mu_s, beta);
    double logp = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        const double r = mu_next[k] - mean[k];
        logp += -0.5 * std::log(2.0 * std::numbers::pi * sigma_mu[k]) - 0.5 * r * r / sigma_mu[k];
    }
    return logp;
}

Neighborhoods::Neighborhoods(const DynamicNetwork& network, const Matrix& w) {
    const std::size_t n = network.num_nodes();
    const std::size_t times = network.num_snapshots();
    out_.assign(times, std::vector<std::vector<Neighbor>>(n));
    in_.assign(times, std::vector<std::vector<Neighbor>>(n));
    totals_.assign(times, std::vector<double>(n, 0.0));
    for (std::size_t t = 0; t < times; ++t) {
        const auto& Y = network.snapshots[t];
        for (std::size_t p = 0; p < n; ++p) {
            double total = 0.0;
            std::size_t active = 0;
            for (std::size_t q = 0; q < n; ++q) {
                if (q != p && Y(p, q)) {
                    total += w(p, q);
                    ++active;
                }
            }
            totals_[t][p] = total;
            for (std::size_t q = 0; q < n; ++q) {
                if (q == p || !Y(p, q)) continue;
                const double wt = total > 0.0 ? w(p, q) / total : 1.0 / static_cast<double>(active);
                out_[t][p].push_back({q, wt});
                in_[t][q].push_back({p, wt});
            }
        }
    }
}

Model::Model(const DynamicNetwork& network, ModelParams params) : network_(&network) {
    set_params(std::move(params));
}

void Model::set_params(ModelParams params) {
    params.validate();
    require(params.num_nodes() == network_->num_nodes(), "parameter node count does not match the network");
    params_ = std::move(params);
    neighborhoods_ = Neighborhoods(*network_, params_.w);
    const std::size_t k = params_.num_roles();
    effective_B_ = Matrix(k, k);
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            effective_B_(g, h) = std::clamp((1.0 - params_.rho) * params_.B(g, h), kMinLinkProb, 1.0 - kMinLinkProb);
        }
    }
}

double Model::effective_beta(std::size_t t, std::size_t p) const {
    return neighborhoods_.influencers(t, p).empty() ? 0.0 : params_.beta[p];
}

}  // namespace coevnet
