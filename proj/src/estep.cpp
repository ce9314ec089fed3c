#include "coevnet/estep.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "coevnet/numerics.hpp"

namespace coevnet {

namespace {

void softmax_inplace(std::vector<double>& x) {
    const double m = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (double& v : x) {
        v = std::exp(v - m);
        total += v;
    }
    for (double& v : x) v /= total;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

Matrix link_table(const Matrix& B_eff, bool linked) {
    Matrix table(B_eff.rows(), B_eff.cols());
    for (std::size_t g = 0; g < B_eff.rows(); ++g) {
        for (std::size_t h = 0; h < B_eff.cols(); ++h) {
            table(g, h) = linked ? std::log(B_eff(g, h)) : std::log1p(-B_eff(g, h));
        }
    }
    return table;
}

PhiResult phi_fixed_point(std::span<const double> gamma_p, std::span<const double> gamma_q, const Matrix& table,
                          std::vector<double> send, std::vector<double> recv, const EStepConfig& config) {
    const std::size_t k = gamma_p.size();
    PhiResult result;
    std::vector<double> next(k);
    for (int it = 1; it <= config.max_inner_iters; ++it) {
        double change = 0.0;
        for (std::size_t g = 0; g < k; ++g) {
            double v = gamma_p[g];
            for (std::size_t h = 0; h < k; ++h) v += table(g, h) * recv[h];
            next[g] = v;
        }
        softmax_inplace(next);
        change = std::max(change, max_abs_diff(next, send));
        send.swap(next);
        for (std::size_t h = 0; h < k; ++h) {
            double v = gamma_q[h];
            for (std::size_t g = 0; g < k; ++g) v += table(g, h) * send[g];
            next[h] = v;
        }
        softmax_inplace(next);
        change = std::max(change, max_abs_diff(next, recv));
        recv.swap(next);
        result.iterations = it;
        if (change < config.phi_tol) {
            result.converged = true;
            break;
        }
    }
    result.send = std::move(send);
    result.recv = std::move(recv);
    return result;
}

// Terms of sigma's stationarity condition for (p, t, k) in variance form:
// 1/s = precision + coef * exp(s / 2).
struct SigmaEquation {
    double precision;
    double coef;
};

SigmaEquation sigma_equation(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                             std::size_t k) {
    const double count = bound_multiplicity(model.num_nodes());
    return {node_precision(model, p, t)[k], count * std::exp(vs.gamma[t](p, k)) / vs.zeta(t, p)};
}

void notify(const EStepConfig& config, std::string_view stage, std::size_t t) {
    if (config.on_update) config.on_update(stage, t);
}

// Joint Newton ascent over every gamma_p^t with sigma and phi held fixed and
// each zeta at its optimum. The objective is the quadratic prior, transition
// and pair part minus c * logsumexp(gamma_p^t + sigma^2/2) per (p, t). Its
// negative Hessian is the Gaussian part G (constant during an E-step) plus
// c (diag(w) - w w^T) per (p, t). Transitions only link t - 1 and t, so the
// system is block tridiagonal in time with dense N*K blocks.
class GammaNewton {
public:
    explicit GammaNewton(const Model& model)
        : n_(model.num_nodes()), k_(model.num_roles()), times_(model.network().num_snapshots()),
          count_(bound_multiplicity(model.num_nodes())) {
        const auto& params = model.params();
        const auto bs = static_cast<Eigen::Index>(n_ * k_);
        diag_.assign(times_, Eigen::MatrixXd::Zero(bs, bs));
        lower_.assign(times_, Eigen::MatrixXd::Zero(bs, bs));  // lower_[t] couples t (rows) with t - 1
        const std::size_t anchored = params.static_slices ? times_ : 1;
        for (std::size_t t = 0; t < anchored; ++t) {
            for (std::size_t p = 0; p < n_; ++p) {
                for (std::size_t c = 0; c < k_; ++c) diag_[t](local(p, c), local(p, c)) += 1.0 / params.A[c];
            }
        }
        if (!params.static_slices) {
            std::vector<std::pair<std::size_t, double>> prev;  // (node at t - 1, coefficient)
            for (std::size_t t = 1; t < times_; ++t) {
                for (std::size_t p = 0; p < n_; ++p) {
                    const double b = model.effective_beta(t - 1, p);
                    prev.clear();
                    prev.emplace_back(p, -(1.0 - b));
                    for (const auto& q : model.neighborhoods().influencers(t - 1, p)) prev.emplace_back(q.node, -b * q.weight);
                    for (std::size_t c = 0; c < k_; ++c) {
                        const double inv = 1.0 / params.sigma_mu[c];
                        diag_[t](local(p, c), local(p, c)) += inv;
                        for (const auto& [i, x] : prev) {
                            lower_[t](local(p, c), local(i, c)) += inv * x;
                            for (const auto& [j, y] : prev) diag_[t - 1](local(i, c), local(j, c)) += inv * x * y;
                        }
                    }
                }
            }
        }
    }

    // Newton iterations (at most max_iter) until the gradient is below
    // grad_tol; leaves zeta at its optimum. Returns the largest change in
    // any gamma entry.
    double run(const Model& model, VariationalState& vs, double grad_tol, int max_iter) {
        const auto bs = static_cast<Eigen::Index>(n_ * k_);
        std::vector<Eigen::VectorXd> grad(times_, Eigen::VectorXd(bs)), quad_grad = grad, weights = grad, step = grad;
        const NodeSeries start = vs.gamma;
        for (int it = 0; it < max_iter; ++it) {
            set_zeta(vs);
            double gmax = 0.0;
            for (std::size_t t = 0; t < times_; ++t) {
                for (std::size_t p = 0; p < n_; ++p) {
                    const auto g = elbo_grad_gamma(model, vs, p, t);
                    std::vector<double> x(k_);
                    for (std::size_t c = 0; c < k_; ++c) {
                        const double s = vs.sigma[t](p, c);
                        x[c] = vs.gamma[t](p, c) + 0.5 * s * s;
                    }
                    const auto w = softmax_from_natural(x);
                    for (std::size_t c = 0; c < k_; ++c) {
                        const auto i = local(p, c);
                        grad[t](i) = g[c];
                        weights[t](i) = w[c];
                        quad_grad[t](i) = g[c] + count_ * w[c];
                        gmax = std::max(gmax, std::abs(g[c]));
                    }
                }
            }
            if (gmax < grad_tol) break;

            solve(weights, grad, step);
            double slope = 0.0, curv = 0.0, lin = 0.0, smax = 0.0;
            for (std::size_t t = 0; t < times_; ++t) {
                slope += grad[t].dot(step[t]);
                lin += quad_grad[t].dot(step[t]);
                Eigen::VectorXd gs = diag_[t] * step[t];
                if (t > 0) gs += lower_[t] * step[t - 1];
                if (t + 1 < times_) gs += lower_[t + 1].transpose() * step[t + 1];
                curv += step[t].dot(gs);
                smax = std::max(smax, step[t].lpNorm<Eigen::Infinity>());
            }
            if (!(slope > 0.0)) break;
            // F(gamma + a step) - F(gamma), exact for this objective. The
            // log-sum-exp change is accumulated per slot as
            // log(1 + sum_k w_k expm1(a step_k)) to avoid cancellation.
            auto gain = [&](double a) {
                double lse_change = 0.0;
                for (std::size_t t = 0; t < times_; ++t) {
                    for (std::size_t p = 0; p < n_; ++p) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < k_; ++c) {
                            acc += weights[t](local(p, c)) * std::expm1(a * step[t](local(p, c)));
                        }
                        lse_change += std::log1p(acc);
                    }
                }
                return a * lin - 0.5 * a * a * curv - count_ * lse_change;
            };
            double alpha = 1.0;
            bool accepted = false;
            for (int back = 0; back < 60; ++back) {
                if (gain(alpha) >= 1e-4 * alpha * slope) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
            for (std::size_t t = 0; t < times_; ++t) {
                for (std::size_t p = 0; p < n_; ++p) {
                    for (std::size_t c = 0; c < k_; ++c) vs.gamma[t](p, c) += alpha * step[t](local(p, c));
                }
            }
            if (alpha * smax < 1e-15) break;
        }
        set_zeta(vs);
        double moved = 0.0;
        for (std::size_t t = 0; t < times_; ++t) {
            moved = std::max(moved, (vs.gamma[t].values().size() == 0)
                                        ? 0.0
                                        : max_abs_diff(vs.gamma[t].values(), start[t].values()));
        }
        return moved;
    }

private:
    Eigen::Index local(std::size_t p, std::size_t c) const { return static_cast<Eigen::Index>(p * k_ + c); }

    // Block tridiagonal Cholesky solve of (G + bound Hessian) x = b.
    void solve(const std::vector<Eigen::VectorXd>& weights, const std::vector<Eigen::VectorXd>& b,
               std::vector<Eigen::VectorXd>& x) {
        std::vector<Eigen::LLT<Eigen::MatrixXd>> pivots(times_);
        std::vector<Eigen::MatrixXd> coupling(times_);  // D_{t-1}^{-1} C_t^T
        std::vector<Eigen::VectorXd> y(times_);
        for (std::size_t t = 0; t < times_; ++t) {
            Eigen::MatrixXd D = diag_[t];
            for (std::size_t p = 0; p < n_; ++p) {
                for (std::size_t c = 0; c < k_; ++c) {
                    const auto i = local(p, c);
                    for (std::size_t d = 0; d < k_; ++d) {
                        const auto j = local(p, d);
                        D(i, j) += count_ * ((c == d ? weights[t](i) : 0.0) - weights[t](i) * weights[t](j));
                    }
                }
            }
            y[t] = b[t];
            if (t > 0) {
                coupling[t] = pivots[t - 1].solve(lower_[t].transpose());
                D.noalias() -= lower_[t] * coupling[t];
                y[t].noalias() -= lower_[t] * pivots[t - 1].solve(y[t - 1]);
            }
            pivots[t].compute(D);
            if (pivots[t].info() != Eigen::Success) throw NumericalError("gamma Newton system is not positive definite");
        }
        for (std::size_t t = times_; t-- > 0;) {
            Eigen::VectorXd r = y[t];
            if (t + 1 < times_) r.noalias() -= lower_[t + 1].transpose() * x[t + 1];
            x[t] = pivots[t].solve(r);
        }
    }

    void set_zeta(VariationalState& vs) const {
        for (std::size_t t = 0; t < times_; ++t) {
            for (std::size_t p = 0; p < n_; ++p) vs.zeta(t, p) = update_zeta(vs, p, t);
        }
    }

    std::size_t n_, k_, times_;
    double count_;
    std::vector<Eigen::MatrixXd> diag_;
    std::vector<Eigen::MatrixXd> lower_;
};

}  // namespace

void EStepConfig::validate() const {
    if (!(phi_tol > 0.0 && gamma_tol > 0.0 && sigma_tol > 0.0 && sigma_residual_tol > 0.0 && gamma_grad_tol > 0.0)) {
        throw std::invalid_argument("E-step tolerances must be positive");
    }
    if (max_inner_iters < 1 || max_sweeps < 1) throw std::invalid_argument("E-step iteration caps must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must lie in (0,1]");
}

PhiResult update_phi_pair(std::span<const double> gamma_p, std::span<const double> gamma_q, bool linked,
                          const Matrix& B_eff, const EStepConfig& config,
                          std::optional<std::pair<std::span<const double>, std::span<const double>>> warm) {
    const std::size_t k = gamma_p.size();
    for (double b : B_eff.values()) {
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("effective B entries must lie in (0,1)");
    }
    std::vector<double> send(k, 1.0 / static_cast<double>(k));
    std::vector<double> recv(k, 1.0 / static_cast<double>(k));
    if (warm) {
        send.assign(warm->first.begin(), warm->first.end());
        recv.assign(warm->second.begin(), warm->second.end());
    }
    return phi_fixed_point(gamma_p, gamma_q, link_table(B_eff, linked), std::move(send), std::move(recv), config);
}

double sigma_residual(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t, std::size_t k) {
    const auto eq = sigma_equation(model, vs, p, t, k);
    const double sd = vs.sigma[t](p, k);
    const double s = sd * sd;
    return 1.0 - s * eq.precision - s * eq.coef * std::exp(0.5 * s);
}

double solve_sigma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t, std::size_t k) {
    const auto eq = sigma_equation(model, vs, p, t, k);
    if (!(eq.precision > 0.0) || !std::isfinite(eq.precision) || !std::isfinite(eq.coef)) {
        std::ostringstream msg;
        msg << "sigma equation degenerate at p=" << p << " t=" << t << " k=" << k << ": precision=" << eq.precision
            << " coef=" << eq.coef;
        throw NumericalError(msg.str());
    }
    const double hi = 1.0 / eq.precision;
    if (eq.coef == 0.0) return std::sqrt(hi);
    // f is strictly decreasing with f(0) = 1 and f(1/P) < 0.
    auto f = [&](double s) { return 1.0 - s * eq.precision - s * eq.coef * std::exp(0.5 * s); };
    auto df = [&](double s) { return -eq.precision - eq.coef * std::exp(0.5 * s) * (1.0 + 0.5 * s); };
    try {
        const auto root = find_root_decreasing(f, df, 0.0, hi, 1e-15, 1e-16);
        return std::sqrt(root.x);
    } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "sigma solve failed at p=" << p << " t=" << t << " k=" << k << ": " << e.what();
        throw NumericalError(msg.str());
    }
}

std::vector<double> update_gamma(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                                 const EStepConfig& config) {
    (void)config;
    const auto quad = gamma_quadratic(model, vs, p, t);
    const double count = bound_multiplicity(model.num_nodes());
    const std::size_t k = model.num_roles();
    std::vector<double> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        const double L = quad.linear[c];
        const double P = quad.precision[c];
        const double s = vs.sigma[t](p, c);
        const double D = count * std::exp(0.5 * s * s) / vs.zeta(t, p);
        if (D == 0.0) {
            out[c] = L / P;
            continue;
        }
        // h(x) = L - P x - D e^x is strictly decreasing; h(L/P) < 0.
        auto h = [&](double x) { return L - P * x - D * std::exp(x); };
        auto dh = [&](double x) { return -P - D * std::exp(x); };
        const double hi = std::min(L / P, 700.0);
        double step = 1.0;
        double lo = hi - step;
        while (h(lo) < 0.0) {
            step *= 2.0;
            lo = hi - step;
            if (step > 1e6) throw NumericalError("gamma solve could not bracket the root");
        }
        out[c] = find_root_decreasing(h, dh, lo, hi, 1e-13 * std::max(1.0, std::abs(L)), 1e-16).x;
    }
    return out;
}

GammaZeta update_gamma_zeta(const Model& model, const VariationalState& vs, std::size_t p, std::size_t t,
                            const EStepConfig& config) {
    const auto quad = gamma_quadratic(model, vs, p, t);
    const double c = bound_multiplicity(model.num_nodes());
    const std::size_t k = model.num_roles();
    const auto s = vs.sigma[t].row(p);
    std::vector<double> half_var(k);
    for (std::size_t j = 0; j < k; ++j) half_var[j] = 0.5 * s[j] * s[j];

    // F(g) = sum_k L_k g_k - P_k g_k^2 / 2 - c log sum_k exp(g_k + s_k^2/2)
    std::vector<double> shifted(k);
    auto objective = [&](const std::vector<double>& g) {
        double value = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            value += quad.linear[j] * g[j] - 0.5 * quad.precision[j] * g[j] * g[j];
            shifted[j] = g[j] + half_var[j];
        }
        return value - c * log_sum_exp(shifted);
    };

    std::vector<double> g(vs.gamma[t].row(p).begin(), vs.gamma[t].row(p).end());
    std::vector<double> grad(k), weights(k), step(k), trial(k);
    double value = objective(g);
    double scale = 1.0;
    for (std::size_t j = 0; j < k; ++j) scale = std::max(scale, std::abs(quad.linear[j]));

    bool converged = false;
    for (int it = 0; it < 200 && !converged; ++it) {
        for (std::size_t j = 0; j < k; ++j) shifted[j] = g[j] + half_var[j];
        weights = softmax_from_natural(shifted);
        double gmax = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            grad[j] = quad.linear[j] - quad.precision[j] * g[j] - c * weights[j];
            gmax = std::max(gmax, std::abs(grad[j]));
        }
        if (gmax <= 1e-13 * scale) break;

        // Newton direction: (diag(P + c w) - c w w^T)^{-1} grad by Sherman-Morrison.
        double wu = 0.0, wv = 0.0;
        std::vector<double> v(k);
        for (std::size_t j = 0; j < k; ++j) {
            const double d = quad.precision[j] + c * weights[j];
            step[j] = grad[j] / d;
            v[j] = weights[j] / d;
            wu += weights[j] * step[j];
            wv += weights[j] * v[j];
        }
        const double denom = 1.0 - c * wv;
        double slope = 0.0;
        double smax = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            step[j] += c * v[j] * wu / denom;
            slope += grad[j] * step[j];
            smax = std::max(smax, std::abs(step[j]));
        }

        double alpha = config.damping;
        bool accepted = false;
        for (int back = 0; back < 60; ++back) {
            for (std::size_t j = 0; j < k; ++j) trial[j] = g[j] + alpha * step[j];
            const double trial_value = objective(trial);
            if (trial_value >= value + 1e-4 * alpha * slope) {
                g = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted || alpha * smax <= 1e-15 * (1.0 + std::abs(g[0]))) converged = true;
    }

    GammaZeta out;
    out.gamma = g;
    out.zeta = 0.0;
    for (std::size_t j = 0; j < k; ++j) out.zeta += std::exp(g[j] + half_var[j]);
    return out;
}

double update_zeta(const VariationalState& vs, std::size_t p, std::size_t t) {
    const auto g = vs.gamma[t].row(p);
    const auto s = vs.sigma[t].row(p);
    std::vector<double> shifted(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) shifted[j] = g[j] + 0.5 * s[j] * s[j];
    return std::exp(log_sum_exp(shifted));
}

StationarityReport stationarity(const Model& model, const VariationalState& vs) {
    StationarityReport report;
    for (std::size_t t = 0; t < vs.num_times(); ++t) {
        for (std::size_t p = 0; p < vs.num_nodes(); ++p) {
            for (double g : elbo_grad_gamma(model, vs, p, t)) {
                report.max_gamma_grad = std::max(report.max_gamma_grad, std::abs(g));
            }
            for (std::size_t k = 0; k < vs.num_roles(); ++k) {
                report.max_sigma_residual = std::max(report.max_sigma_residual, std::abs(sigma_residual(model, vs, p, t, k)));
            }
        }
    }
    return report;
}

namespace {

struct SweepChange {
    double phi = 0.0;
    double sigma = 0.0;
    double gamma = 0.0;

    double max() const { return std::max({phi, sigma, gamma}); }
    bool settled(const EStepConfig& c) const { return phi < c.phi_tol && sigma < c.sigma_tol && gamma < c.gamma_tol; }
};

struct SweepContext {
    const Model& model;
    const EStepConfig& config;
    Matrix link;
    Matrix nolink;
    std::vector<double> uniform;
    GammaNewton newton;
    int phi_unconverged = 0;
};

SweepChange sweep_once(SweepContext& ctx, VariationalState& vs, bool first) {
    const Model& model = ctx.model;
    const EStepConfig& config = ctx.config;
    const std::size_t n = model.num_nodes();
    const std::size_t k = model.num_roles();
    const std::size_t times = model.network().num_snapshots();
    SweepChange change;
    for (std::size_t t = 0; t < times; ++t) {
        const auto& Y = model.network().snapshots[t];
        // Role posteriors. On the first sweep the fixed point from uniform
        // 1/K competes with the one from the current values and the
        // higher-scoring one is kept; later sweeps warm-start.
        for (std::size_t p = 0; p < n; ++p) {
            const auto gp = vs.gamma[t].row(p);
            for (std::size_t q = 0; q < n; ++q) {
                if (p == q) continue;
                const auto gq = vs.gamma[t].row(q);
                auto send = vs.phi_send.at(t, p, q);
                auto recv = vs.phi_recv.at(t, p, q);
                const Matrix& table = Y(p, q) ? ctx.link : ctx.nolink;
                auto warm =
                    phi_fixed_point(gp, gq, table, {send.begin(), send.end()}, {recv.begin(), recv.end()}, config);
                const PhiResult* best = &warm;
                PhiResult fresh;
                if (first) {
                    fresh = phi_fixed_point(gp, gq, table, ctx.uniform, ctx.uniform, config);
                    const double current = pair_objective(send, recv, gp, gq, Y(p, q), model.effective_B());
                    const double f_fresh = pair_objective(fresh.send, fresh.recv, gp, gq, Y(p, q), model.effective_B());
                    const double f_warm = pair_objective(warm.send, warm.recv, gp, gq, Y(p, q), model.effective_B());
                    if (std::max(f_fresh, f_warm) < current) continue;
                    if (f_fresh > f_warm) best = &fresh;
                }
                if (!best->converged) ++ctx.phi_unconverged;
                change.phi = std::max({change.phi, max_abs_diff(best->send, send), max_abs_diff(best->recv, recv)});
                std::copy(best->send.begin(), best->send.end(), send.begin());
                std::copy(best->recv.begin(), best->recv.end(), recv.begin());
            }
        }
        notify(config, "phi", t);
    }

    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < k; ++c) {
                const double sd = solve_sigma(model, vs, p, t, c);
                change.sigma = std::max(change.sigma, std::abs(sd - vs.sigma[t](p, c)));
                vs.sigma[t](p, c) = sd;
            }
        }
        notify(config, "sigma", t);
    }
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) vs.zeta(t, p) = update_zeta(vs, p, t);
    }
    notify(config, "zeta", times);

    change.gamma = ctx.newton.run(model, vs, 0.1 * config.gamma_grad_tol, 1);
    notify(config, "gamma", times);
    return change;
}

// Unconstrained coordinates for extrapolation: gamma, log sigma, log phi.
std::vector<double> flatten(const VariationalState& vs) {
    std::vector<double> x;
    for (const auto& m : vs.gamma) x.insert(x.end(), m.values().begin(), m.values().end());
    for (const auto& m : vs.sigma) {
        for (double s : m.values()) x.push_back(std::log(s));
    }
    for (const PairSeries* ps : {&vs.phi_send, &vs.phi_recv}) {
        for (double f : ps->values()) x.push_back(std::log(std::max(f, 1e-300)));
    }
    return x;
}

void unflatten(const std::vector<double>& x, VariationalState& vs) {
    std::size_t i = 0;
    for (auto& m : vs.gamma) {
        for (double& v : m.values()) v = x[i++];
    }
    for (auto& m : vs.sigma) {
        for (double& v : m.values()) v = std::exp(x[i++]);
    }
    const std::size_t k = vs.num_roles();
    for (PairSeries* ps : {&vs.phi_send, &vs.phi_recv}) {
        auto& vals = ps->values();
        for (std::size_t off = 0; off < vals.size(); off += k) {
            std::vector<double> logits(x.begin() + static_cast<std::ptrdiff_t>(i + off),
                                       x.begin() + static_cast<std::ptrdiff_t>(i + off + k));
            softmax_inplace(logits);
            std::copy(logits.begin(), logits.end(), vals.begin() + static_cast<std::ptrdiff_t>(off));
        }
        i += vals.size();
    }
    for (std::size_t t = 0; t < vs.num_times(); ++t) {
        for (std::size_t p = 0; p < vs.num_nodes(); ++p) vs.zeta(t, p) = update_zeta(vs, p, t);
    }
}

bool all_finite(const VariationalState& vs) {
    auto ok = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    for (std::size_t t = 0; t < vs.num_times(); ++t) {
        if (!ok(vs.gamma[t].values()) || !ok(vs.sigma[t].values())) return false;
    }
    return ok(vs.zeta.values()) && ok(vs.phi_send.values()) && ok(vs.phi_recv.values());
}

}  // namespace

EStepReport run_estep(const Model& model, VariationalState& vs, const EStepConfig& config) {
    config.validate();
    vs.validate();
    const std::size_t k = model.num_roles();
    SweepContext ctx{model,
                     config,
                     link_table(model.effective_B(), true),
                     link_table(model.effective_B(), false),
                     std::vector<double>(k, 1.0 / static_cast<double>(k)),
                     GammaNewton(model)};

    EStepReport report;
    // One plain sweep; true when the E-step has converged.
    auto plain = [&]() {
        const SweepChange change = sweep_once(ctx, vs, report.sweeps == 0);
        ++report.sweeps;
        report.max_change = change.max();
        if (!change.settled(config)) return false;
        report.stationarity = stationarity(model, vs);
        report.converged = report.stationarity.max_sigma_residual < config.sigma_residual_tol &&
                           report.stationarity.max_gamma_grad < config.gamma_grad_tol;
        return report.converged;
    };

    while (report.sweeps < config.max_sweeps) {
        if (!config.accelerate || report.sweeps + 3 > config.max_sweeps) {
            if (plain()) break;
            continue;
        }
        const auto x0 = flatten(vs);
        if (plain()) break;
        const auto x1 = flatten(vs);
        if (plain()) break;
        const auto x2 = flatten(vs);
        const double e2 = elbo(model, vs);

        double rr = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double r = x1[i] - x0[i];
            const double v = x2[i] - 2.0 * x1[i] + x0[i];
            rr += r * r;
            vv += v * v;
        }
        if (!(vv > 0.0)) continue;
        const double alpha = -std::clamp(std::sqrt(rr / vv), 1.0, 100.0);
        if (alpha == -1.0) continue;
        std::vector<double> xc(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double r = x1[i] - x0[i];
            const double v = x2[i] - 2.0 * x1[i] + x0[i];
            xc[i] = x0[i] - 2.0 * alpha * r + alpha * alpha * v;
        }
        VariationalState candidate = vs;
        unflatten(xc, candidate);
        if (!all_finite(candidate)) continue;
        try {
            sweep_once(ctx, candidate, false);
        } catch (const NumericalError&) {
            continue;
        }
        ++report.sweeps;
        if (all_finite(candidate) && elbo(model, candidate) > e2) vs = std::move(candidate);
    }
    report.phi_unconverged = ctx.phi_unconverged;
    if (!report.converged) report.stationarity = stationarity(model, vs);
    return report;
}

}  // namespace coevnet
