#include "coevnet/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace coevnet {

namespace {

// beta maximising the node's transition term for fixed weights. The term is
// a concave quadratic in beta; returns nullopt-like NaN when p never has
// neighbours.
double exact_beta(const DynamicNetwork& Y, const VariationalState& vs, std::span<const double> sigma_mu,
                  std::size_t p, std::span<const double> w_row) {
    const std::size_t k = sigma_mu.size();
    double num = 0.0, den = 0.0;
    for (std::size_t t = 1; t < Y.num_snapshots(); ++t) {
        const auto& snap = Y.snapshots[t - 1];
        double total = 0.0;
        std::size_t active = 0;
        for (std::size_t q = 0; q < Y.num_nodes(); ++q) {
            if (q != p && snap(p, q)) {
                total += w_row[q];
                ++active;
            }
        }
        if (active == 0) continue;
        std::vector<double> S(k, 0.0), W2(k, 0.0);
        for (std::size_t q = 0; q < Y.num_nodes(); ++q) {
            if (q == p || !snap(p, q)) continue;
            const double wt = total > 0.0 ? w_row[q] / total : 1.0 / static_cast<double>(active);
            for (std::size_t c = 0; c < k; ++c) {
                const double sq = vs.sigma[t - 1](q, c);
                S[c] += wt * vs.gamma[t - 1](q, c);
                W2[c] += wt * wt * sq * sq;
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double a = vs.gamma[t](p, c) - vs.gamma[t - 1](p, c);
            const double b = S[c] - vs.gamma[t - 1](p, c);
            const double sp = vs.sigma[t - 1](p, c);
            num += (a * b + sp * sp) / sigma_mu[c];
            den += (b * b + sp * sp + W2[c]) / sigma_mu[c];
        }
    }
    if (den <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(num / den, 0.0, 1.0);
}

std::vector<std::size_t> ever_active(const DynamicNetwork& Y, std::size_t p) {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < Y.num_nodes(); ++q) {
        if (q == p) continue;
        for (std::size_t t = 0; t + 1 < Y.num_snapshots(); ++t) {
            if (Y.snapshots[t](p, q)) {
                out.push_back(q);
                break;
            }
        }
    }
    return out;
}

}  // namespace

void MStepConfig::validate() const {
    if (!(influence_step > 0.0) || influence_iters < 1 || !(influence_grad_tol > 0.0)) {
        throw std::invalid_argument("invalid M-step configuration");
    }
}

Matrix B_ratio(const DynamicNetwork& Y, const VariationalState& vs) {
    const std::size_t k = vs.num_roles();
    const std::size_t n = vs.num_nodes();
    Matrix num(k, k, 0.0), den(k, k, 0.0);
    for (std::size_t t = 0; t < vs.num_times(); ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (p == q) continue;
                const auto s = vs.phi_send.at(t, p, q);
                const auto r = vs.phi_recv.at(t, p, q);
                const bool linked = Y.snapshots[t](p, q);
                for (std::size_t g = 0; g < k; ++g) {
                    for (std::size_t h = 0; h < k; ++h) {
                        const double x = s[g] * r[h];
                        den(g, h) += x;
                        if (linked) num(g, h) += x;
                    }
                }
            }
        }
    }
    Matrix out(k, k, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            if (den(g, h) > 0.0) out(g, h) = num(g, h) / den(g, h);
        }
    }
    return out;
}

BUpdate update_B(const DynamicNetwork& Y, const VariationalState& vs, const Matrix& previous, double rho) {
    const Matrix ratio = B_ratio(Y, vs);
    BUpdate out{previous, {}};
    for (std::size_t g = 0; g < ratio.rows(); ++g) {
        for (std::size_t h = 0; h < ratio.cols(); ++h) {
            if (std::isnan(ratio(g, h))) {
                out.empty_cells.emplace_back(g, h);
                continue;
            }
            out.B(g, h) = std::clamp(ratio(g, h) / (1.0 - rho), kMinLinkProb, 1.0 - kMinLinkProb);
        }
    }
    return out;
}

std::vector<double> expected_squared_residual(const Model& model, const VariationalState& vs) {
    const std::size_t k = model.num_roles();
    const std::size_t n = model.num_nodes();
    const std::size_t transitions = model.last_time();
    if (transitions == 0) throw std::invalid_argument("noise update needs at least one transition");
    std::vector<double> total(k, 0.0);
    const auto& nb = model.neighborhoods();
    for (std::size_t t = 1; t <= transitions; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            const double beta = model.effective_beta(t - 1, p);
            for (std::size_t c = 0; c < k; ++c) {
                double mean = vs.gamma[t](p, c) - (1.0 - beta) * vs.gamma[t - 1](p, c);
                const double sn = vs.sigma[t](p, c);
                const double sp = vs.sigma[t - 1](p, c);
                double var = sn * sn + (1.0 - beta) * (1.0 - beta) * sp * sp;
                for (const auto& q : nb.influencers(t - 1, p)) {
                    const double sq = vs.sigma[t - 1](q.node, c);
                    mean -= beta * q.weight * vs.gamma[t - 1](q.node, c);
                    var += beta * beta * q.weight * q.weight * sq * sq;
                }
                total[c] += mean * mean + var;
            }
        }
    }
    for (double& v : total) v /= static_cast<double>(n * transitions);
    return total;
}

std::vector<double> update_eta(const Model& model, const VariationalState& vs) {
    auto eta = expected_squared_residual(model, vs);
    for (double& v : eta) v = std::max(v, kVarianceFloor);
    return eta;
}

PriorUpdate update_prior(const VariationalState& vs, bool all_times) {
    const std::size_t k = vs.num_roles();
    const std::size_t n = vs.num_nodes();
    if (n == 0) throw std::invalid_argument("prior update needs at least one node");
    const std::size_t times = all_times ? vs.num_times() : 1;
    const double count = static_cast<double>(n * times);
    PriorUpdate out{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < k; ++c) out.alpha0[c] += vs.gamma[t](p, c);
        }
    }
    for (double& a : out.alpha0) a /= count;
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < k; ++c) {
                const double g = vs.gamma[t](p, c);
                const double s = vs.sigma[t](p, c);
                const double a = out.alpha0[c];
                out.a[c] += g * g + s * s - 2.0 * a * g + a * a;
            }
        }
    }
    for (double& a : out.a) a = std::max(std::sqrt(std::max(a / count, 0.0)), kVarianceFloor);
    return out;
}

InfluenceUpdate update_influence(const Model& model, const VariationalState& vs, const MStepConfig& config) {
    config.validate();
    const auto& params = model.params();
    const auto& Y = model.network();
    const std::size_t n = model.num_nodes();
    InfluenceUpdate out{params.beta, params.w, true, 0};
    if (params.static_slices || Y.num_snapshots() < 2) return out;

    for (std::size_t p = 0; p < n; ++p) {
        const auto active = ever_active(Y, p);
        if (active.empty()) continue;
        std::vector<double> w(params.w.row(p).begin(), params.w.row(p).end());
        double beta = params.beta[p];
        auto value_at = [&](double b, const std::vector<double>& row) {
            return node_transition_term(Y, vs, params.sigma_mu, p, b, row);
        };
        double value = value_at(beta, w);
        double step = config.influence_step;
        bool node_converged = false;
        int it = 0;
        for (; it < config.influence_iters; ++it) {
            const double b_star = exact_beta(Y, vs, params.sigma_mu, p, w);
            if (!std::isnan(b_star)) {
                const double v_star = value_at(b_star, w);
                if (v_star >= value) {
                    beta = b_star;
                    value = v_star;
                }
            }
            const auto grad = node_transition_gradient(Y, vs, params.sigma_mu, p, beta, w);
            double pg_norm = 0.0;
            const double beta_pg = (beta <= 0.0 && grad.beta < 0.0) || (beta >= 1.0 && grad.beta > 0.0) ? 0.0 : grad.beta;
            pg_norm = std::max(pg_norm, std::abs(beta_pg));
            for (std::size_t q : active) {
                const double g = (w[q] <= 0.0 && grad.w[q] < 0.0) ? 0.0 : grad.w[q];
                pg_norm = std::max(pg_norm, std::abs(g));
            }
            if (pg_norm < config.influence_grad_tol) {
                node_converged = true;
                break;
            }

            bool accepted = false;
            std::vector<double> trial = w;
            for (int back = 0; back < 50; ++back) {
                double ascent = 0.0;
                for (std::size_t q : active) {
                    trial[q] = std::max(0.0, w[q] + step * grad.w[q]);
                    ascent += grad.w[q] * (trial[q] - w[q]);
                }
                double total = 0.0;
                for (std::size_t q : active) total += trial[q];
                if (total > 0.0 && ascent > 0.0) {
                    const double trial_value = value_at(beta, trial);
                    if (trial_value >= value + 1e-4 * ascent) {
                        w = trial;
                        value = trial_value;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!accepted) {
                node_converged = true;
                break;
            }
            step *= 2.0;
        }
        out.iterations = std::max(out.iterations, it);
        if (!node_converged) out.converged = false;

        double total = 0.0;
        for (std::size_t q : active) total += w[q];
        const double scale = total > 0.0 ? static_cast<double>(active.size()) / total : 0.0;
        for (std::size_t q : active) w[q] = total > 0.0 ? w[q] * scale : 1.0;
        out.beta[p] = beta;
        std::copy(w.begin(), w.end(), out.w.row(p).begin());
    }
    return out;
}

}  // namespace coevnet
