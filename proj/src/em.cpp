#include "coevnet/em.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "coevnet/numerics.hpp"
#include "coevnet/parallel.hpp"

namespace coevnet {

namespace {

constexpr std::uint64_t kInitStage = 1;
constexpr double kInitSigma = 0.3;
constexpr double kInitPeak = 0.8;
constexpr std::size_t kExactAlignmentMaxK = 8;

// Lloyd's algorithm with k-means++ seeding. Returns a cluster per row.
std::vector<std::size_t> kmeans(const Eigen::MatrixXd& X, std::size_t k, SplitMix64& rng) {
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<std::size_t> label(n, 0);
    if (n == 0) return label;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), X.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::min<std::size_t>(n - 1, static_cast<std::size_t>(unif(rng) * static_cast<double>(n)));
    centers.row(0) = X.row(static_cast<Eigen::Index>(first));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            d2[i] = std::min(d2[i], (X.row(ii) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
            total += d2[i];
        }
        std::size_t pick = c % n;
        if (total > 0.0) {
            double u = unif(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                u -= d2[i];
                if (u <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(static_cast<Eigen::Index>(c)) = X.row(static_cast<Eigen::Index>(pick));
    }

    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centers.rowwise() - X.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
            if (label[i] != static_cast<std::size_t>(best)) {
                changed = true;
                label[i] = static_cast<std::size_t>(best);
            }
        }
        std::vector<std::size_t> count(k, 0);
        centers.setZero();
        for (std::size_t i = 0; i < n; ++i) {
            centers.row(static_cast<Eigen::Index>(label[i])) += X.row(static_cast<Eigen::Index>(i));
            ++count[label[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) {
                centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(count[c]);
                continue;
            }
            // Empty cluster: move it to the point farthest from its centre.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double d = (X.row(ii) - centers.row(static_cast<Eigen::Index>(label[i]))).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centers.row(static_cast<Eigen::Index>(c)) = X.row(static_cast<Eigen::Index>(far));
            label[far] = c;
            changed = true;
        }
        if (!changed && iter > 0) break;
    }
    return label;
}

std::vector<std::size_t> spectral_roles(const DynamicNetwork& Y, std::size_t k, SplitMix64& rng) {
    const std::size_t n = Y.num_nodes();
    std::vector<std::size_t> roles(n);
    for (std::size_t p = 0; p < n; ++p) roles[p] = p % k;
    if (n <= k || k == 1) return roles;

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& snap : Y.snapshots) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (snap(p, q)) {
                    M(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) += 0.5;
                    M(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p)) += 0.5;
                }
            }
        }
    }
    if (M.isZero()) return roles;
    M /= static_cast<double>(Y.num_snapshots());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(M);
    if (solver.info() != Eigen::Success) return roles;
    // Eigenvalues come sorted ascending; the leading k columns are last.
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::MatrixXd U = solver.eigenvectors().rightCols(kk) * std::sqrt(static_cast<double>(n));
    return kmeans(U, k, rng);
}

Matrix block_density(const DynamicNetwork& Y, const std::vector<std::size_t>& roles, std::size_t k) {
    Matrix links(k, k, 0.0), pairs(k, k, 0.0);
    double all_links = 0.0, all_pairs = 0.0;
    const std::size_t n = Y.num_nodes();
    for (const auto& snap : Y.snapshots) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (p == q) continue;
                pairs(roles[p], roles[q]) += 1.0;
                all_pairs += 1.0;
                if (snap(p, q)) {
                    links(roles[p], roles[q]) += 1.0;
                    all_links += 1.0;
                }
            }
        }
    }
    const double overall = all_pairs > 0.0 ? all_links / all_pairs : 0.5;
    Matrix B(k, k);
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            B(g, h) = pairs(g, h) > 0.0 ? links(g, h) / pairs(g, h) : overall;
        }
    }
    return B;
}

bool better(double a, double b) {
    if (std::isnan(b)) return !std::isnan(a);
    return !std::isnan(a) && a > b;
}

}  // namespace

void FitConfig::validate() const {
    if (K < 2) throw std::invalid_argument("K must be at least 2");
    if (max_em_iters < 1) throw std::invalid_argument("max_em_iters must be at least 1");
    if (!(em_tol > 0.0)) throw std::invalid_argument("em_tol must be positive");
    if (restarts < 1) throw std::invalid_argument("restarts must be at least 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
    if (!(beta_init >= 0.0 && beta_init <= 1.0)) throw std::invalid_argument("beta_init must lie in [0, 1]");
    if (!(noise_init > 0.0)) throw std::invalid_argument("noise_init must be positive");
    if (!(init_jitter >= 0.0)) throw std::invalid_argument("init_jitter must be non-negative");
    estep.validate();
    mstep.validate();
}

NodeSeries posterior_trajectories(const VariationalState& vs) {
    NodeSeries out = make_node_series(vs.num_times(), vs.num_nodes(), vs.num_roles());
    std::vector<double> x(vs.num_roles());
    for (std::size_t t = 0; t < vs.num_times(); ++t) {
        for (std::size_t p = 0; p < vs.num_nodes(); ++p) {
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double s = vs.sigma[t](p, k);
                x[k] = vs.gamma[t](p, k) + 0.5 * s * s;
            }
            const auto pi = softmax_from_natural(x);
            std::copy(pi.begin(), pi.end(), out[t].row(p).begin());
        }
    }
    return out;
}

InitialGuess initial_guess(const DynamicNetwork& Y, const FitConfig& config, int restart, bool static_slices) {
    config.validate();
    Y.validate();
    if (Y.num_snapshots() == 0) throw std::invalid_argument("network has no snapshots");
    const std::size_t n = Y.num_nodes();
    const std::size_t k = config.K;
    const std::size_t times = Y.num_snapshots();
    auto rng = substream(config.seed, {kInitStage, static_cast<std::uint64_t>(restart)});

    const auto roles = spectral_roles(Y, k, rng);
    const double gap = k > 1 ? std::log(kInitPeak * static_cast<double>(k - 1) / (1.0 - kInitPeak)) : 0.0;
    std::normal_distribution<double> jitter(0.0, 1.0);

    VariationalState vs = VariationalState::make(n, k, times);
    for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> base(k, 0.0);
        base[roles[p]] = gap;
        for (double& b : base) b += config.init_jitter * jitter(rng);
        for (std::size_t t = 0; t < times; ++t) {
            std::copy(base.begin(), base.end(), vs.gamma[t].row(p).begin());
            for (std::size_t c = 0; c < k; ++c) vs.sigma[t](p, c) = kInitSigma;
        }
    }
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t p = 0; p < n; ++p) vs.zeta(t, p) = update_zeta(vs, p, t);
    }

    ModelParams params = ModelParams::defaults(n, k);
    params.rho = config.rho;
    params.static_slices = static_slices;
    const Matrix density = block_density(Y, roles, k);
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) {
            params.B(g, h) = std::clamp(density(g, h) / (1.0 - config.rho), 0.01, 0.99);
        }
    }
    std::fill(params.beta.begin(), params.beta.end(), static_slices ? 0.0 : config.beta_init);
    std::fill(params.sigma_mu.begin(), params.sigma_mu.end(), config.noise_init);
    const auto prior = update_prior(vs, static_slices);
    params.alpha0 = prior.alpha0;
    for (std::size_t c = 0; c < k; ++c) params.A[c] = prior.a[c] * prior.a[c];
    return {std::move(params), std::move(vs)};
}

FitReport fit_chain(const DynamicNetwork& Y, const FitConfig& config, InitialGuess start) {
    config.validate();
    Model model(Y, std::move(start.params));
    FitReport report;
    report.vs = std::move(start.vs);
    report.vs.validate();
    auto& flags = report.flags;
    const bool dynamic = !model.params().static_slices && Y.num_snapshots() > 1;

    for (int it = 0; it < config.max_em_iters; ++it) {
        const EStepReport es = run_estep(model, report.vs, config.estep);
        if (!es.converged) ++flags.estep_unconverged;
        flags.last_estep_converged = es.converged;
        flags.stationarity = es.stationarity;

        ModelParams p = model.params();
        const auto bu = update_B(Y, report.vs, p.B, p.rho);
        p.B = bu.B;
        const auto prior = update_prior(report.vs, p.static_slices);
        p.alpha0 = prior.alpha0;
        for (std::size_t c = 0; c < p.A.size(); ++c) p.A[c] = prior.a[c] * prior.a[c];
        model.set_params(p);
        if (dynamic) {
            if (config.learn_influence) {
                const auto inf = update_influence(model, report.vs, config.mstep);
                if (!inf.converged) flags.influence_converged = false;
                p.beta = inf.beta;
                p.w = inf.w;
                model.set_params(p);
            }
            p.sigma_mu = update_eta(model, report.vs);
            model.set_params(p);
        }

        const double value = elbo(model, report.vs);
        if (!std::isfinite(value)) throw NumericalError("ELBO became non-finite during EM");
        report.elbo_trace.push_back(value);
        flags.iterations = it + 1;
        if (report.elbo_trace.size() >= 2) {
            const double prev = report.elbo_trace[report.elbo_trace.size() - 2];
            if (value - prev <= config.em_tol * std::abs(prev)) {
                flags.converged = true;
                break;
            }
        }
    }
    if (!flags.converged) flags.diagnostics.push_back("EM reached max_em_iters before the ELBO settled");
    if (flags.estep_unconverged > 0) {
        flags.diagnostics.push_back(std::to_string(flags.estep_unconverged) + " E-step(s) hit the sweep cap");
    }
    if (!flags.influence_converged) flags.diagnostics.push_back("influence M-step hit its iteration cap");
    report.params = model.params();
    report.trajectories = posterior_trajectories(report.vs);
    return report;
}

namespace {

FitReport fit_restarts(const DynamicNetwork& Y, const FitConfig& config, bool static_slices) {
    config.validate();
    Y.validate();
    if (Y.num_nodes() < 2) throw std::invalid_argument("fit needs at least two nodes");
    if (Y.num_snapshots() < 2) throw std::invalid_argument("fit needs at least two snapshots (T >= 1)");
    const auto count = static_cast<std::size_t>(config.restarts);
    std::vector<std::optional<FitReport>> chains(count);
    std::vector<std::string> errors(count);
    parallel_for(count, [&](std::size_t r) {
        try {
            chains[r] = fit_chain(Y, config, initial_guess(Y, config, static_cast<int>(r), static_slices));
        } catch (const NumericalError& e) {
            errors[r] = e.what();
        }
    });

    std::vector<double> finals(count, std::numeric_limits<double>::quiet_NaN());
    std::size_t best = count;
    std::size_t reference = count;
    for (std::size_t r = 0; r < count; ++r) {
        if (!chains[r] || chains[r]->elbo_trace.empty()) continue;
        finals[r] = chains[r]->elbo_trace.back();
        if (reference == count) reference = r;
        if (best == count || better(finals[r], finals[best])) best = r;
    }
    if (best == count) {
        std::string msg = "every restart diverged";
        if (!errors.empty() && !errors.front().empty()) msg += ": " + errors.front();
        throw FitError(msg);
    }
    FitReport out = std::move(*chains[best]);
    if (best != reference) align_to(out, chains[reference]->trajectories);
    out.flags.chosen_restart = static_cast<int>(best);
    out.flags.chain_elbos = finals;
    for (std::size_t r = 0; r < count; ++r) {
        if (!errors[r].empty()) {
            out.flags.diagnostics.push_back("restart " + std::to_string(r) + " diverged: " + errors[r]);
        }
    }
    return out;
}

}  // namespace

FitReport fit(const DynamicNetwork& Y, const FitConfig& config) { return fit_restarts(Y, config, false); }

FitReport static_baseline_fit(const DynamicNetwork& Y, const FitConfig& config) {
    return fit_restarts(Y, config, true);
}

std::vector<std::size_t> best_role_permutation(const NodeSeries& inferred, const NodeSeries& reference) {
    if (inferred.size() != reference.size() || inferred.empty()) {
        throw std::invalid_argument("trajectory series have different lengths");
    }
    const std::size_t k = inferred.front().cols();
    const std::size_t n = inferred.front().rows();
    for (std::size_t t = 0; t < inferred.size(); ++t) {
        if (inferred[t].rows() != n || reference[t].rows() != n || inferred[t].cols() != k ||
            reference[t].cols() != k) {
            throw std::invalid_argument("trajectory shapes differ");
        }
    }
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);

    if (k > kExactAlignmentMaxK) {
        // Greedy matching on summed squared differences.
        Matrix cost(k, k, 0.0);
        for (std::size_t t = 0; t < inferred.size(); ++t) {
            for (std::size_t p = 0; p < n; ++p) {
                for (std::size_t a = 0; a < k; ++a) {
                    for (std::size_t b = 0; b < k; ++b) {
                        const double d = inferred[t](p, a) - reference[t](p, b);
                        cost(a, b) += d * d;
                    }
                }
            }
        }
        std::vector<bool> used_a(k, false), used_b(k, false);
        for (std::size_t step = 0; step < k; ++step) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t ba = 0, bb = 0;
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) {
                    if (!used_a[a] && !used_b[b] && cost(a, b) < best) {
                        best = cost(a, b);
                        ba = a;
                        bb = b;
                    }
                }
            }
            used_a[ba] = used_b[bb] = true;
            perm[bb] = ba;
        }
        return perm;
    }

    std::vector<std::size_t> best_perm = perm;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t t = 0; t < inferred.size(); ++t) {
            for (std::size_t p = 0; p < n; ++p) {
                double sq = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = inferred[t](p, perm[c]) - reference[t](p, c);
                    sq += d * d;
                }
                total += std::sqrt(sq);
            }
        }
        if (total < best - 1e-12) {
            best = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best_perm;
}

NodeSeries permute_roles(const NodeSeries& series, const std::vector<std::size_t>& perm) {
    NodeSeries out = series;
    for (std::size_t t = 0; t < series.size(); ++t) {
        for (std::size_t p = 0; p < series[t].rows(); ++p) {
            for (std::size_t c = 0; c < perm.size(); ++c) out[t](p, c) = series[t](p, perm[c]);
        }
    }
    return out;
}

void permute_roles(VariationalState& vs, const std::vector<std::size_t>& perm) {
    vs.gamma = permute_roles(vs.gamma, perm);
    vs.sigma = permute_roles(vs.sigma, perm);
    for (PairSeries* series : {&vs.phi_send, &vs.phi_recv}) {
        std::vector<double> tmp(perm.size());
        for (std::size_t t = 0; t < series->times(); ++t) {
            for (std::size_t p = 0; p < series->nodes(); ++p) {
                for (std::size_t q = 0; q < series->nodes(); ++q) {
                    auto v = series->at(t, p, q);
                    for (std::size_t c = 0; c < perm.size(); ++c) tmp[c] = v[perm[c]];
                    std::copy(tmp.begin(), tmp.end(), v.begin());
                }
            }
        }
    }
}

void permute_roles(ModelParams& params, const std::vector<std::size_t>& perm) {
    const std::size_t k = perm.size();
    Matrix B(k, k);
    for (std::size_t g = 0; g < k; ++g) {
        for (std::size_t h = 0; h < k; ++h) B(g, h) = params.B(perm[g], perm[h]);
    }
    params.B = B;
    auto apply = [&](std::vector<double>& v) {
        std::vector<double> tmp(k);
        for (std::size_t c = 0; c < k; ++c) tmp[c] = v[perm[c]];
        v = tmp;
    };
    apply(params.sigma_mu);
    apply(params.alpha0);
    apply(params.A);
}

void permute_roles(FitReport& report, const std::vector<std::size_t>& perm) {
    permute_roles(report.params, perm);
    permute_roles(report.vs, perm);
    report.trajectories = permute_roles(report.trajectories, perm);
}

std::vector<std::size_t> align_to(FitReport& report, const NodeSeries& reference) {
    auto perm = best_role_permutation(report.trajectories, reference);
    permute_roles(report, perm);
    return perm;
}

}  // namespace coevnet
