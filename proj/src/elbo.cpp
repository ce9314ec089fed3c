#include "coevnet/elbo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace coevnet {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

// Residual mean and variance of mu_p^t - f_b(mu_p^{t-1}, mu_S(p, t-1)) under q.
void transition_moments(const VariationalState& vs, std::size_t p, std::size_t t, double beta,
                        const std::vector<Neighbor>& neighbors, std::vector<double>& mean,
                        std::vector<double>& var) {
    const std::size_t k = vs.num_roles();
    mean.assign(k, 0.0);
    var.assign(k, 0.0);
    const auto g_now = vs.gamma[t].row(p);
    const auto g_prev = vs.gamma[t - 1].row(p);
    const auto s_now = vs.sigma[t].row(p);
    const auto s_prev = vs.sigma[t - 1].row(p);
    for (std::size_t c = 0; c < k; ++c) {
        mean[c] = g_now[c] - (1.0 - beta) * g_prev[c];
        var[c] = s_now[c] * s_now[c] + (1.0 - beta) * (1.0 - beta) * s_prev[c] * s_prev[c];
    }
    if (beta == 0.0) return;
    for (const auto& nb : neighbors) {
        const auto g_q = vs.gamma[t - 1].row(nb.node);
        const auto s_q = vs.sigma[t - 1].row(nb.node);
        for (std::size_t c = 0; c < k; ++c) {
            mean[c] -= beta * nb.weight * g_q[c];
            var[c] += beta * beta * nb.weight * nb.weight * s_q[c] * s_q[c];
        }
    }
}

void model_transition_moments(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                              std::vector<double>& mean, std::vector<double>& var) {
    transition_moments(vs, p, t, model.effective_beta(t - 1, p), model.neighborhoods().influencers(t - 1, p), mean,
                       var);
}

// Active neighbours of p in snapshot t renormalised under a candidate row.
std::vector<Neighbor> renormalised(const Snapshot& Y, std::size_t p, std::span<const double> w_row, double& total) {
    std::vector<Neighbor> out;
    total = 0.0;
    for (std::size_t q = 0; q < Y.size(); ++q) {
        if (q != p && Y(p, q)) {
            out.push_back({q, w_row[q]});
            total += w_row[q];
        }
    }
    for (auto& nb : out) nb.weight = total > 0.0 ? nb.weight / total : 1.0 / static_cast<double>(out.size());
    return out;
}

double entropy(std::span<const double> phi) {
    double h = 0.0;
    for (double x : phi) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

}  // namespace

VariationalState VariationalState::make(std::size_t n, std::size_t k, std::size_t times) {
    VariationalState vs;
    vs.gamma = make_node_series(times, n, k, 0.0);
    vs.sigma = make_node_series(times, n, k, 1.0);
    vs.zeta = Matrix(times, n, static_cast<double>(k) * std::exp(0.5));
    vs.phi_send = PairSeries(times, n, k, 1.0 / static_cast<double>(k));
    vs.phi_recv = PairSeries(times, n, k, 1.0 / static_cast<double>(k));
    return vs;
}

void VariationalState::validate() const {
    const std::size_t times = gamma.size();
    if (times == 0) throw std::invalid_argument("variational state is empty");
    const std::size_t n = num_nodes();
    const std::size_t k = num_roles();
    if (sigma.size() != times || zeta.rows() != times || zeta.cols() != n) {
        throw std::invalid_argument("variational state shapes disagree");
    }
    for (std::size_t t = 0; t < times; ++t) {
        if (gamma[t].rows() != n || gamma[t].cols() != k || sigma[t].rows() != n || sigma[t].cols() != k) {
            throw std::invalid_argument("variational state shapes disagree");
        }
        for (double s : sigma[t].values()) {
            if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("sigma must be positive");
        }
        for (double g : gamma[t].values()) {
            if (!std::isfinite(g)) throw std::invalid_argument("gamma must be finite");
        }
    }
    for (double z : zeta.values()) {
        if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("zeta must be positive");
    }
    for (const PairSeries* phi : {&phi_send, &phi_recv}) {
        if (phi->times() != times || phi->nodes() != n || phi->roles() != k) {
            throw std::invalid_argument("phi shapes disagree");
        }
        for (std::size_t t = 0; t < times; ++t) {
            for (std::size_t p = 0; p < n; ++p) {
                for (std::size_t q = 0; q < n; ++q) {
                    if (p == q) continue;
                    double total = 0.0;
                    for (double x : phi->at(t, p, q)) {
                        if (x < -1e-10 || x > 1.0 + 1e-10) throw std::invalid_argument("phi entry outside [0,1]");
                        total += x;
                    }
                    if (std::abs(total - 1.0) > 1e-10) throw std::invalid_argument("phi does not sum to one");
                }
            }
        }
    }
}

double bound_multiplicity(std::size_t num_nodes) {
    return 2.0 * (static_cast<double>(num_nodes) - 1.0);
}

double expected_transition_log_density(std::span<const double> mean_residual, std::span<const double> residual_variance,
                                       std::span<const double> sigma_mu) {
    double total = 0.0;
    for (std::size_t c = 0; c < sigma_mu.size(); ++c) {
        total += -0.5 * (kLog2Pi + std::log(sigma_mu[c])) -
                 0.5 * (mean_residual[c] * mean_residual[c] + residual_variance[c]) / sigma_mu[c];
    }
    return total;
}

double pair_objective(std::span<const double> phi_send, std::span<const double> phi_recv,
                      std::span<const double> gamma_p, std::span<const double> gamma_q, bool linked,
                      const Matrix& B_eff) {
    const std::size_t k = gamma_p.size();
    double value = 0.0;
    for (std::size_t g = 0; g < k; ++g) {
        value += phi_send[g] * gamma_p[g] + phi_recv[g] * gamma_q[g];
        double inner = 0.0;
        for (std::size_t h = 0; h < k; ++h) {
            const double b = B_eff(g, h);
            inner += phi_recv[h] * (linked ? std::log(b) : std::log1p(-b));
        }
        value += phi_send[g] * inner;
    }
    return value + entropy(phi_send) + entropy(phi_recv);
}

ElboTerms elbo_terms(const Model& model, const VariationalState& vs) {
    vs.validate();
    const auto& params = model.params();
    const auto& Y = model.network();
    const std::size_t n = model.num_nodes();
    const std::size_t k = model.num_roles();
    const std::size_t times = Y.num_snapshots();
    if (vs.num_nodes() != n || vs.num_roles() != k || vs.num_times() != times) {
        throw std::invalid_argument("variational state does not match the model dimensions");
    }
    const double count = bound_multiplicity(n);

    // log B' and log(1 - B') tables
    Matrix log_b(k, k), log_nb(k, k);
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            log_b(g, h) = std::log(model.effective_B()(g, h));
            log_nb(g, h) = std::log1p(-model.effective_B()(g, h));
        }
    }

    ElboTerms terms;
    std::vector<double> mean, var;
    for (std::size_t t = 0; t < times; ++t) {
        double prior_t = 0.0, trans_t = 0.0, pairs_t = 0.0, bound_t = 0.0, entropy_t = 0.0;
        const bool uses_prior = t == 0 || params.static_slices;
        for (std::size_t p = 0; p < n; ++p) {
            const auto g = vs.gamma[t].row(p);
            const auto s = vs.sigma[t].row(p);
            if (uses_prior) {
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = g[c] - params.alpha0[c];
                    prior_t += -0.5 * (kLog2Pi + std::log(params.A[c])) - 0.5 * (d * d + s[c] * s[c]) / params.A[c];
                }
            } else {
                model_transition_moments(model, vs, p, t, mean, var);
                trans_t += expected_transition_log_density(mean, var, params.sigma_mu);
            }
            const double z = vs.zeta(t, p);
            double expsum = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                expsum += std::exp(g[c] + 0.5 * s[c] * s[c]);
                entropy_t += 0.5 * (kLog2Pi + 1.0) + std::log(s[c]);
            }
            bound_t -= count * (std::log(z) - 1.0 + expsum / z);

            for (std::size_t q = 0; q < n; ++q) {
                if (q == p) continue;
                const auto ps = vs.phi_send.at(t, p, q);
                const auto pr = vs.phi_recv.at(t, p, q);
                const bool linked = Y.snapshots[t](p, q);
                const Matrix& table = linked ? log_b : log_nb;
                double lik = 0.0;
                for (std::size_t a = 0; a < k; ++a) {
                    double inner = 0.0;
                    for (std::size_t b = 0; b < k; ++b) inner += table(a, b) * pr[b];
                    lik += ps[a] * inner;
                    pairs_t += ps[a] * g[a] + pr[a] * vs.gamma[t](q, a);
                }
                pairs_t += lik;
                entropy_t += entropy(ps) + entropy(pr);
            }
        }
        terms.prior += prior_t;
        terms.transition += trans_t;
        terms.pairs += pairs_t;
        terms.bound += bound_t;
        terms.entropy += entropy_t;
    }
    terms.total = terms.prior + terms.transition + terms.pairs + terms.bound + terms.entropy;
    return terms;
}

double elbo(const Model& model, const VariationalState& vs) { return elbo_terms(model, vs).total; }

double elbo(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params) {
    return elbo(Model(Y, params), vs);
}

std::vector<double> node_precision(const Model& model, std::size_t p, std::size_t t) {
    const auto& params = model.params();
    const std::size_t k = model.num_roles();
    std::vector<double> prec(k, 0.0);
    if (params.static_slices) {
        for (std::size_t c = 0; c < k; ++c) prec[c] = 1.0 / params.A[c];
        return prec;
    }
    double forward = 0.0;
    if (t < model.last_time()) {
        const double b = model.effective_beta(t, p);
        forward = (1.0 - b) * (1.0 - b);
        for (const auto& nb : model.neighborhoods().influencees(t, p)) {
            const double bq = params.beta[nb.node];
            forward += bq * bq * nb.weight * nb.weight;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        const double eta2 = params.sigma_mu[c];
        prec[c] = (t == 0 ? 1.0 / params.A[c] : 1.0 / eta2) + forward / eta2;
    }
    return prec;
}

GammaQuadratic gamma_quadratic(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t) {
    const auto& params = model.params();
    const std::size_t n = model.num_nodes();
    const std::size_t k = model.num_roles();
    const auto g = vs.gamma[t].row(p);

    std::vector<double> grad(k, 0.0);
    if (t == 0 || params.static_slices) {
        for (std::size_t c = 0; c < k; ++c) grad[c] -= (g[c] - params.alpha0[c]) / params.A[c];
    }
    if (!params.static_slices) {
        std::vector<double> mean, var;
        if (t >= 1) {
            model_transition_moments(model, vs, p, t, mean, var);
            for (std::size_t c = 0; c < k; ++c) grad[c] -= mean[c] / params.sigma_mu[c];
        }
        if (t < model.last_time()) {
            model_transition_moments(model, vs, p, t + 1, mean, var);
            const double b = model.effective_beta(t, p);
            for (std::size_t c = 0; c < k; ++c) grad[c] += (1.0 - b) * mean[c] / params.sigma_mu[c];
            for (const auto& nb : model.neighborhoods().influencees(t, p)) {
                model_transition_moments(model, vs, nb.node, t + 1, mean, var);
                const double coef = params.beta[nb.node] * nb.weight;
                for (std::size_t c = 0; c < k; ++c) grad[c] += coef * mean[c] / params.sigma_mu[c];
            }
        }
    }
    for (std::size_t q = 0; q < n; ++q) {
        if (q == p) continue;
        const auto ps = vs.phi_send.at(t, p, q);
        const auto pr = vs.phi_recv.at(t, q, p);
        for (std::size_t c = 0; c < k; ++c) grad[c] += ps[c] + pr[c];
    }

    GammaQuadratic quad{std::move(grad), node_precision(model, p, t)};
    for (std::size_t c = 0; c < k; ++c) quad.linear[c] += quad.precision[c] * g[c];
    return quad;
}

std::vector<double> elbo_grad_gamma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t) {
    const auto quad = gamma_quadratic(model, vs, p, t);
    const auto g = vs.gamma[t].row(p);
    const auto s = vs.sigma[t].row(p);
    const double count = bound_multiplicity(model.num_nodes());
    const double z = vs.zeta(t, p);
    std::vector<double> grad(g.size());
    for (std::size_t c = 0; c < g.size(); ++c) {
        grad[c] = quad.linear[c] - quad.precision[c] * g[c] - count * std::exp(g[c] + 0.5 * s[c] * s[c]) / z;
    }
    return grad;
}

std::vector<double> elbo_grad_gamma(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params,
                                    std::size_t p, std::size_t t) {
    return elbo_grad_gamma(Model(Y, params), vs, p, t);
}

double node_transition_term(const DynamicNetwork& Y, const VariationalState& vs, std::span<const double> sigma_mu,
                            std::size_t p, double beta, std::span<const double> w_row) {
    double total = 0.0;
    std::vector<double> mean, var;
    for (std::size_t t = 1; t < Y.num_snapshots(); ++t) {
        double wsum = 0.0;
        const auto neighbors = renormalised(Y.snapshots[t - 1], p, w_row, wsum);
        transition_moments(vs, p, t, neighbors.empty() ? 0.0 : beta, neighbors, mean, var);
        total += expected_transition_log_density(mean, var, sigma_mu);
    }
    return total;
}

NodeInfluenceGradient node_transition_gradient(const DynamicNetwork& Y, const VariationalState& vs,
                                               std::span<const double> sigma_mu, std::size_t p, double beta,
                                               std::span<const double> w_row) {
    const std::size_t n = Y.num_nodes();
    const std::size_t k = sigma_mu.size();
    NodeInfluenceGradient grad{0.0, std::vector<double>(n, 0.0)};
    std::vector<double> mean, var, per_neighbor;
    for (std::size_t t = 1; t < Y.num_snapshots(); ++t) {
        double wsum = 0.0;
        const auto neighbors = renormalised(Y.snapshots[t - 1], p, w_row, wsum);
        if (neighbors.empty()) continue;
        transition_moments(vs, p, t, beta, neighbors, mean, var);

        const auto g_prev = vs.gamma[t - 1].row(p);
        const auto s_prev = vs.sigma[t - 1].row(p);
        // dm/dbeta = gamma_p^{t-1} - S, dv/dbeta = -2(1-beta) s_p^2 + 2 beta sum w~^2 s_q^2
        std::vector<double> S(k, 0.0), W2(k, 0.0);
        for (const auto& nb : neighbors) {
            const auto g_q = vs.gamma[t - 1].row(nb.node);
            const auto s_q = vs.sigma[t - 1].row(nb.node);
            for (std::size_t c = 0; c < k; ++c) {
                S[c] += nb.weight * g_q[c];
                W2[c] += nb.weight * nb.weight * s_q[c] * s_q[c];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double dm = g_prev[c] - S[c];
            const double dv = -2.0 * (1.0 - beta) * s_prev[c] * s_prev[c] + 2.0 * beta * W2[c];
            grad.beta -= (mean[c] * dm + 0.5 * dv) / sigma_mu[c];
        }

        if (wsum <= 0.0) continue;
        // partials with respect to the renormalised weights, then the chain
        // rule d w~_j / d w_i = (delta_ij - w~_j) / W
        per_neighbor.assign(neighbors.size(), 0.0);
        double weighted = 0.0;
        for (std::size_t j = 0; j < neighbors.size(); ++j) {
            const auto g_q = vs.gamma[t - 1].row(neighbors[j].node);
            const auto s_q = vs.sigma[t - 1].row(neighbors[j].node);
            double gj = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double dm = -beta * g_q[c];
                const double dv = 2.0 * beta * beta * neighbors[j].weight * s_q[c] * s_q[c];
                gj -= (mean[c] * dm + 0.5 * dv) / sigma_mu[c];
            }
            per_neighbor[j] = gj;
            weighted += neighbors[j].weight * gj;
        }
        for (std::size_t j = 0; j < neighbors.size(); ++j) {
            grad.w[neighbors[j].node] += (per_neighbor[j] - weighted) / wsum;
        }
    }
    return grad;
}

InfluenceGradient elbo_grad_influence(const Model& model, const VariationalState& vs) {
    const auto& params = model.params();
    const std::size_t n = model.num_nodes();
    InfluenceGradient grad{std::vector<double>(n, 0.0), Matrix(n, n, 0.0)};
    if (params.static_slices) return grad;
    for (std::size_t p = 0; p < n; ++p) {
        const auto node = node_transition_gradient(model.network(), vs, params.sigma_mu, p, params.beta[p],
                                                   params.w.row(p));
        grad.beta[p] = node.beta;
        std::copy(node.w.begin(), node.w.end(), grad.w.row(p).begin());
    }
    return grad;
}

InfluenceGradient elbo_grad_influence(const DynamicNetwork& Y, const VariationalState& vs, const ModelParams& params) {
    return elbo_grad_influence(Model(Y, params), vs);
}

}  // namespace coevnet
