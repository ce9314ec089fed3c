#pragma once

// Evaluation protocols: trajectory error, polarization, correlation with
// external scores and influence ranking.

#include <optional>
#include <string>
#include <vector>

#include "coevnet/elbo.hpp"

namespace coevnet {

/// (1/N) sum_p ||inferred_p - truth_p||_2 at one time step.
double trajectory_l2_error(const Matrix& inferred, const Matrix& truth);

/// The same, for every time step.
std::vector<double> trajectory_l2_errors(const NodeSeries& inferred, const NodeSeries& truth);

/// External per-node, per-time ratings. values[t][p] is empty when missing.
struct ScoreSeries {
    std::vector<std::vector<std::optional<double>>> values;

    std::size_t num_times() const { return values.size(); }
    /// Throws std::invalid_argument unless present values lie in [0, 1].
    void validate() const;
};

/// Min-max rescaling of every present value to [0, 1] over all nodes and
/// times; `flip` maps x to 1 - x afterwards. A constant series maps to 0.5.
ScoreSeries rescale_scores(const ScoreSeries& raw, bool flip = false);

/// For each t: mean probability of `role` over the m nodes that score
/// highest on it, minus the mean over the m lowest. Groups are re-selected
/// every t; ties are broken by node index.
std::vector<double> polarization_series(const NodeSeries& trajectories, std::size_t m, std::size_t role = 0);

struct TrendRow {
    std::size_t t = 0;
    double polarization = 0.0;
    std::optional<double> delta;  // P_t - P_{t-1}; empty at t = 0
    std::string direction;        // "up", "down", "flat" or "" at t = 0
};

/// Direction of change between consecutive polarization values. Changes
/// with magnitude at most `flat_tol` are reported as "flat".
std::vector<TrendRow> trend_directions(const std::vector<double>& polarization, double flat_tol = 0.0);

struct CorrelationResult {
    std::vector<std::optional<double>> per_time;  // aligned sign
    std::optional<double> pooled;                 // aligned sign, >= 0 when present
    std::vector<std::optional<double>> raw_per_time;
    std::optional<double> raw_pooled;
    // True when the role-1 probabilities were replaced by their complement
    // (the K = 2 role swap) to make the pooled correlation non-negative.
    bool flipped = false;
};

/// Pearson correlation between the probability of `role` and the external
/// score, per time step and pooled over all (node, time) entries. Time steps
/// (or the pool) with fewer than 3 usable entries, or zero variance, are
/// reported as missing.
CorrelationResult score_correlation(const NodeSeries& trajectories, const ScoreSeries& scores, std::size_t role = 0);

/// Plain Pearson r; nullopt when fewer than 3 pairs or a variance vanishes.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct RankedNode {
    std::size_t node = 0;
    double score = 0.0;
};

struct InfluenceRanking {
    // Descending influence score sum_{p, t < T} Y_t(p,q) w~_{p<-q} beta_p.
    std::vector<RankedNode> influence;
    // Descending beta: the most influenceable nodes first.
    std::vector<RankedNode> susceptibility;
};

InfluenceRanking influence_ranking(const ModelParams& params, const DynamicNetwork& Y);

/// Influence score of every node (unsorted), as used by influence_ranking.
std::vector<double> influence_scores(const ModelParams& params, const DynamicNetwork& Y);

}  // namespace coevnet
