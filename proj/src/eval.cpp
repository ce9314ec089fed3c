#include "coevnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace coevnet {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("membership tables have different dimensions");
    }
}

std::vector<RankedNode> ranked(const std::vector<double>& scores) {
    std::vector<RankedNode> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {i, scores[i]};
    std::stable_sort(out.begin(), out.end(), [](const RankedNode& a, const RankedNode& b) { return a.score > b.score; });
    return out;
}

}  // namespace

double trajectory_l2_error(const Matrix& inferred, const Matrix& truth) {
    check_same_shape(inferred, truth);
    if (inferred.rows() == 0) throw std::invalid_argument("membership tables are empty");
    double total = 0.0;
    for (std::size_t p = 0; p < inferred.rows(); ++p) {
        double sq = 0.0;
        for (std::size_t k = 0; k < inferred.cols(); ++k) {
            const double d = inferred(p, k) - truth(p, k);
            sq += d * d;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(inferred.rows());
}

std::vector<double> trajectory_l2_errors(const NodeSeries& inferred, const NodeSeries& truth) {
    if (inferred.size() != truth.size()) throw std::invalid_argument("trajectories have different lengths");
    std::vector<double> out(inferred.size());
    for (std::size_t t = 0; t < inferred.size(); ++t) out[t] = trajectory_l2_error(inferred[t], truth[t]);
    return out;
}

void ScoreSeries::validate() const {
    for (const auto& row : values) {
        for (const auto& v : row) {
            if (v && !(*v >= 0.0 && *v <= 1.0)) throw std::invalid_argument("scores must lie in [0, 1]");
        }
    }
}

ScoreSeries rescale_scores(const ScoreSeries& raw, bool flip) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& row : raw.values) {
        for (const auto& v : row) {
            if (!v) continue;
            if (!std::isfinite(*v)) throw std::invalid_argument("scores must be finite");
            lo = std::min(lo, *v);
            hi = std::max(hi, *v);
        }
    }
    ScoreSeries out = raw;
    for (auto& row : out.values) {
        for (auto& v : row) {
            if (!v) continue;
            double x = hi > lo ? (*v - lo) / (hi - lo) : 0.5;
            if (flip) x = 1.0 - x;
            v = x;
        }
    }
    return out;
}

std::vector<double> polarization_series(const NodeSeries& trajectories, std::size_t m, std::size_t role) {
    std::vector<double> out;
    out.reserve(trajectories.size());
    for (const auto& pi : trajectories) {
        const std::size_t n = pi.rows();
        if (m == 0 || 2 * m > n) throw std::invalid_argument("polarization needs 1 <= m and 2m <= N");
        if (role >= pi.cols()) throw std::invalid_argument("role index out of range");
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return pi(a, role) > pi(b, role); });
        double top = 0.0, bottom = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            top += pi(order[i], role);
            bottom += pi(order[n - 1 - i], role);
        }
        out.push_back((top - bottom) / static_cast<double>(m));
    }
    return out;
}

std::vector<TrendRow> trend_directions(const std::vector<double>& polarization, double flat_tol) {
    std::vector<TrendRow> rows;
    for (std::size_t t = 0; t < polarization.size(); ++t) {
        TrendRow row{t, polarization[t], std::nullopt, ""};
        if (t > 0) {
            const double d = polarization[t] - polarization[t - 1];
            row.delta = d;
            row.direction = d > flat_tol ? "up" : (d < -flat_tol ? "down" : "flat");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson inputs differ in length");
    const std::size_t n = x.size();
    if (n < 3) return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult score_correlation(const NodeSeries& trajectories, const ScoreSeries& scores, std::size_t role) {
    if (scores.num_times() != trajectories.size()) {
        throw std::invalid_argument("scores and trajectories cover different time spans");
    }
    CorrelationResult out;
    std::vector<double> all_x, all_y;
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const auto& pi = trajectories[t];
        if (role >= pi.cols()) throw std::invalid_argument("role index out of range");
        if (scores.values[t].size() != pi.rows()) throw std::invalid_argument("scores and trajectories disagree on N");
        std::vector<double> x, y;
        for (std::size_t p = 0; p < pi.rows(); ++p) {
            if (!scores.values[t][p]) continue;
            x.push_back(pi(p, role));
            y.push_back(*scores.values[t][p]);
        }
        out.raw_per_time.push_back(pearson(x, y));
        all_x.insert(all_x.end(), x.begin(), x.end());
        all_y.insert(all_y.end(), y.begin(), y.end());
    }
    out.raw_pooled = pearson(all_x, all_y);
    out.flipped = out.raw_pooled && *out.raw_pooled < 0.0;
    const double sign = out.flipped ? -1.0 : 1.0;
    for (const auto& r : out.raw_per_time) out.per_time.push_back(r ? std::optional<double>(sign * *r) : std::nullopt);
    if (out.raw_pooled) out.pooled = sign * *out.raw_pooled;
    return out;
}

std::vector<double> influence_scores(const ModelParams& params, const DynamicNetwork& Y) {
    const std::size_t n = Y.num_nodes();
    if (params.num_nodes() != n || params.w.rows() != n || params.w.cols() != n) {
        throw std::invalid_argument("parameters and network disagree on N");
    }
    const Neighborhoods nb(Y, params.w);
    std::vector<double> score(n, 0.0);
    for (std::size_t t = 0; t + 1 < Y.num_snapshots(); ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            for (const auto& q : nb.influencers(t, p)) score[q.node] += q.weight * params.beta[p];
        }
    }
    return score;
}

InfluenceRanking influence_ranking(const ModelParams& params, const DynamicNetwork& Y) {
    return {ranked(influence_scores(params, Y)), ranked(params.beta)};
}

}  // namespace coevnet
