#include "coevnet/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "coevnet/io.hpp"

namespace coevnet {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
    BenchmarkOptions opts;
    fs::path out;
};

struct FitArgs {
    fs::path network;
    fs::path truth;
    fs::path out;
    std::size_t K = 2;
    int restarts = 5;
    int max_iters = 100;
    double tol = 1e-6;
    double rho = 0.0;
    std::uint64_t seed = 0;
    bool no_influence = false;
    bool static_only = false;
};

struct EvalArgs {
    fs::path report;
    fs::path network;
    fs::path truth;
    fs::path scores;
    fs::path out;
    bool flip_scores = false;
    std::size_t m = 0;  // 0: N / 3
    std::size_t role = 0;
};

struct SenateArgs {
    fs::path records;
    fs::path out;
    int threshold = 3;
};

std::string fmt(double x) { return format_double(x); }

std::string fmt(const std::optional<double>& x) { return x ? format_double(*x) : ""; }

FitConfig fit_config(const FitArgs& a) {
    FitConfig c;
    c.K = a.K;
    c.restarts = a.restarts;
    c.max_em_iters = a.max_iters;
    c.em_tol = a.tol;
    c.rho = a.rho;
    c.seed = a.seed;
    c.learn_influence = !a.no_influence;
    return c;
}

void write_trajectories(const fs::path& path, const NodeSeries& traj, const DynamicNetwork& Y) {
    const std::size_t k = traj.empty() ? 0 : traj.front().cols();
    std::vector<std::string> header{"node", "time"};
    for (std::size_t c = 0; c < k; ++c) header.push_back("role_" + std::to_string(c));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t p = 0; p < Y.num_nodes(); ++p) {
        for (std::size_t t = 0; t < traj.size(); ++t) {
            std::vector<std::string> row{Y.node_labels.empty() ? std::to_string(p) : Y.node_labels[p],
                                         std::to_string(t)};
            for (std::size_t c = 0; c < k; ++c) row.push_back(fmt(traj[t](p, c)));
            rows.push_back(std::move(row));
        }
    }
    save_csv(path, header, rows);
}

std::string label(const DynamicNetwork& Y, std::size_t p) {
    return Y.node_labels.empty() ? std::to_string(p) : Y.node_labels[p];
}

int run_generate(const GenerateArgs& a, std::ostream& out) {
    const GenConfig config = benchmark_config(a.opts);
    const GroundTruth truth = generate_sequence(config);
    fs::create_directories(a.out);
    save_edge_sequence(a.out / "network.tsv", truth.network);
    save_json(a.out / "truth.json", to_json(truth));
    save_json(a.out / "params.json", to_json(config.params));
    out << "wrote " << (a.out / "network.tsv").string() << ", truth.json, params.json\n";
    return 0;
}

int run_fit(const FitArgs& a, std::ostream& out) {
    LoadDiagnostics diag;
    const DynamicNetwork Y = load_edge_sequence(a.network, &diag);
    const FitConfig config = fit_config(a);
    FitReport report = a.static_only ? static_baseline_fit(Y, config) : fit(Y, config);
    if (!a.truth.empty()) align_to(report, truth_from_json(load_json(a.truth)).memberships.pi);
    for (const auto& w : diag.warnings) report.flags.diagnostics.push_back("input: " + w);
    fs::create_directories(a.out);
    save_json(a.out / "report.json", to_json(report));
    save_json(a.out / "params.json", to_json(report.params));
    write_trajectories(a.out / "trajectories.csv", report.trajectories, Y);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < report.elbo_trace.size(); ++i) {
        rows.push_back({std::to_string(i + 1), fmt(report.elbo_trace[i])});
    }
    save_csv(a.out / "elbo_trace.csv", {"iteration", "elbo"}, rows);
    out << "final elbo " << fmt(report.elbo_trace.empty() ? 0.0 : report.elbo_trace.back()) << " after "
        << report.flags.iterations << " iterations" << (report.flags.converged ? "" : " (not converged)") << '\n';
    return 0;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
    FitReport report = report_from_json(load_json(a.report));
    const std::size_t n = report.vs.num_nodes();
    fs::create_directories(a.out);

    std::optional<DynamicNetwork> Y;
    if (!a.network.empty()) Y = load_edge_sequence(a.network);
    if (Y && (Y->num_nodes() != n || Y->num_snapshots() != report.trajectories.size())) {
        throw IoError("network does not match the fit report");
    }

    if (!a.truth.empty()) {
        const GroundTruth truth = truth_from_json(load_json(a.truth));
        align_to(report, truth.memberships.pi);
        const auto errors = trajectory_l2_errors(report.trajectories, truth.memberships.pi);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t t = 0; t < errors.size(); ++t) rows.push_back({std::to_string(t), fmt(errors[t])});
        save_csv(a.out / "l2_error.csv", {"t", "l2_error"}, rows);
    }

    const std::size_t m = a.m > 0 ? a.m : std::max<std::size_t>(1, n / 3);
    const auto pol = polarization_series(report.trajectories, m, a.role);
    std::vector<std::vector<std::string>> pol_rows;
    for (const auto& row : trend_directions(pol)) {
        pol_rows.push_back({std::to_string(row.t), fmt(row.polarization), fmt(row.delta), row.direction});
    }
    save_csv(a.out / "polarization.csv", {"t", "polarization", "delta", "direction"}, pol_rows);

    if (!a.scores.empty()) {
        if (!Y) throw IoError("--scores needs --network to resolve node labels");
        const ScoreSeries scores = load_scores(a.scores, *Y, a.flip_scores);
        const auto corr = score_correlation(report.trajectories, scores, a.role);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t t = 0; t < corr.per_time.size(); ++t) {
            rows.push_back({std::to_string(t), fmt(corr.per_time[t]), fmt(corr.raw_per_time[t])});
        }
        rows.push_back({"pooled", fmt(corr.pooled), fmt(corr.raw_pooled)});
        save_csv(a.out / "correlation.csv", {"t", "r", "raw_r"}, rows);
    }

    if (Y) {
        const auto ranking = influence_ranking(report.params, *Y);
        auto table = [&](const std::vector<RankedNode>& list) {
            std::vector<std::vector<std::string>> rows;
            for (std::size_t i = 0; i < list.size(); ++i) {
                rows.push_back({std::to_string(i + 1), label(*Y, list[i].node), fmt(list[i].score)});
            }
            return rows;
        };
        save_csv(a.out / "influence.csv", {"rank", "node", "influence"}, table(ranking.influence));
        save_csv(a.out / "beta.csv", {"rank", "node", "beta"}, table(ranking.susceptibility));
    }
    out << "wrote metrics to " << a.out.string() << '\n';
    return 0;
}

int run_build_senate(const SenateArgs& a, std::ostream& out) {
    const auto records = load_sponsorship_records(a.records);
    const DynamicNetwork Y = build_cosponsorship_network(records, a.threshold);
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    save_edge_sequence(a.out, Y);
    out << "kept " << Y.num_nodes() << " nodes over " << Y.num_snapshots() << " snapshots\n";
    return 0;
}

int run_compare(const FitArgs& a, std::ostream& out) {
    const DynamicNetwork Y = load_edge_sequence(a.network);
    const GroundTruth truth = truth_from_json(load_json(a.truth));
    const FitConfig config = fit_config(a);
    FitReport full = fit(Y, config);
    FitReport baseline = static_baseline_fit(Y, config);
    align_to(full, truth.memberships.pi);
    align_to(baseline, truth.memberships.pi);
    const auto e_full = trajectory_l2_errors(full.trajectories, truth.memberships.pi);
    const auto e_base = trajectory_l2_errors(baseline.trajectories, truth.memberships.pi);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < e_full.size(); ++t) rows.push_back({std::to_string(t), fmt(e_full[t]), fmt(e_base[t])});
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    save_csv(a.out, {"t", "full_l2", "static_l2"}, rows);
    out << "wrote " << a.out.string() << '\n';
    return 0;
}

void add_fit_options(CLI::App* cmd, FitArgs& a) {
    cmd->add_option("--network", a.network, "edge sequence file")->required();
    cmd->add_option("--k", a.K, "number of roles")->check(CLI::Range(2, 64));
    cmd->add_option("--restarts", a.restarts, "independent EM chains")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", a.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--tol", a.tol, "relative ELBO gain that ends a chain")->check(CLI::PositiveNumber);
    cmd->add_option("--rho", a.rho, "fixed sparsity in [0,1)")->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--seed", a.seed, "random seed");
    cmd->add_flag("--no-influence", a.no_influence, "keep beta and w at their initial values");
}

std::string error_json(const std::string& message, const std::string& kind) {
    return nlohmann::json{{"error", message}, {"kind", kind}}.dump();
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Co-evolving membership and network model: simulate, fit, evaluate."};
    app.name("coevnet");
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "simulate a network with ground truth");
    generate->add_option("--n", gen.opts.N, "nodes")->check(CLI::PositiveNumber);
    generate->add_option("--k", gen.opts.K, "roles")->check(CLI::PositiveNumber);
    generate->add_option("--t", gen.opts.T, "last time index (T+1 snapshots)");
    generate->add_option("--prior-var", gen.opts.prior_var, "isotropic prior variance A");
    generate->add_option("--peakedness", gen.opts.peakedness, "initial mass on each node's home role");
    generate->add_option("--b-diag", gen.opts.b_diag, "diagonal of B");
    generate->add_option("--b-off", gen.opts.b_off, "off-diagonal of B");
    generate->add_option("--beta", gen.opts.beta, "susceptibility of every node");
    generate->add_option("--noise-var", gen.opts.noise_var, "transition noise variance");
    generate->add_option("--rho", gen.opts.rho, "sparsity");
    generate->add_option("--seed", gen.opts.seed, "random seed");
    generate->add_option("--out", gen.out, "output directory")->required();

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "fit the model to an edge sequence");
    add_fit_options(fit_cmd, fit_args);
    fit_cmd->add_flag("--static", fit_args.static_only, "fit the per-snapshot baseline instead");
    fit_cmd->add_option("--truth", fit_args.truth, "align roles to this ground truth");
    fit_cmd->add_option("--out", fit_args.out, "output directory")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "metrics for a fit report");
    eval_cmd->add_option("--report", ev.report, "report.json from fit")->required();
    eval_cmd->add_option("--network", ev.network, "edge sequence (enables influence ranking and scores)");
    eval_cmd->add_option("--truth", ev.truth, "ground truth for the L2 error table");
    eval_cmd->add_option("--scores", ev.scores, "external scores CSV node,time,score");
    eval_cmd->add_flag("--flip-scores", ev.flip_scores, "use 1 - rescaled score");
    eval_cmd->add_option("--m", ev.m, "polarization group size (default N/3)");
    eval_cmd->add_option("--role", ev.role, "role whose probability is the score");
    eval_cmd->add_option("--out", ev.out, "output directory")->required();

    SenateArgs sen;
    auto* senate = app.add_subcommand("build-senate", "co-sponsorship records to an edge sequence");
    senate->add_option("--records", sen.records, "records CSV time,bill,sponsor,cosponsors")->required();
    senate->add_option("--threshold", sen.threshold, "minimum shared bills per link")->check(CLI::PositiveNumber);
    senate->add_option("--out", sen.out, "output edge file")->required();

    FitArgs cmp;
    auto* compare = app.add_subcommand("compare", "per-time L2 error of the full model and the static baseline");
    add_fit_options(compare, cmp);
    compare->add_option("--truth", cmp.truth, "ground truth")->required();
    compare->add_option("--out", cmp.out, "output CSV")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json(e.what(), "usage") << '\n';
        return 2;
    }

    try {
        if (*generate) return run_generate(gen, out);
        if (*fit_cmd) return run_fit(fit_args, out);
        if (*eval_cmd) return run_eval(ev, out);
        if (*senate) return run_build_senate(sen, out);
        if (*compare) return run_compare(cmp, out);
    } catch (const std::invalid_argument& e) {
        err << error_json(e.what(), "invalid-input") << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << error_json(e.what(), "runtime") << '\n';
        return 1;
    }
    return 2;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace coevnet
