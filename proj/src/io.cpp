#include "coevnet/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace coevnet {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string node_label(const DynamicNetwork& Y, std::size_t p) {
    return Y.node_labels.empty() ? "n" + std::to_string(p) : Y.node_labels[p];
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

double num(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

json num_array(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
}

std::vector<double> num_vector(const json& j) {
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) out.push_back(num(x));
    return out;
}

json to_json(const PairSeries& s) {
    return {{"times", s.times()}, {"nodes", s.nodes()}, {"roles", s.roles()}, {"data", num_array(s.values())}};
}

PairSeries pair_series_from_json(const json& j) {
    PairSeries s(j.at("times").get<std::size_t>(), j.at("nodes").get<std::size_t>(), j.at("roles").get<std::size_t>());
    auto data = num_vector(j.at("data"));
    if (data.size() != s.values().size()) throw IoError("pair series data has the wrong length");
    s.values() = std::move(data);
    return s;
}

void check_format(const json& j, const char* format) {
    if (!j.contains("format") || j.at("format") != format) {
        throw IoError(std::string("expected a ") + format + " document");
    }
    if (j.at("version").get<int>() != kFormatVersion) throw IoError("unsupported document version");
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}

DynamicNetwork parse_edge_sequence(std::istream& in, LoadDiagnostics* diag) {
    std::vector<std::string> labels;
    std::unordered_map<std::string, std::size_t> index;
    auto node = [&](const std::string& label) {
        auto [it, inserted] = index.emplace(label, labels.size());
        if (inserted) labels.push_back(label);
        return it->second;
    };
    struct Edge {
        std::size_t t, p, q, line;
    };
    std::vector<Edge> edges;
    std::optional<std::size_t> declared;
    std::size_t max_time = 0;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            const auto directive = split_ws(line.substr(hash + 1));
            if (hash == line.find_first_not_of(" \t") && !directive.empty()) {
                if (directive[0] == "snapshots") {
                    std::size_t count = 0;
                    if (directive.size() != 2 || !parse_number(directive[1], count)) {
                        throw ParseError(lineno, "malformed #snapshots directive");
                    }
                    declared = count;
                } else if (directive[0] == "node") {
                    if (directive.size() != 2) throw ParseError(lineno, "malformed #node directive");
                    node(directive[1]);
                }
            }
            line.resize(hash);
        }
        const auto fields = split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() != 3) throw ParseError(lineno, "expected time, src, dst");
        std::size_t t = 0;
        if (!parse_number(fields[0], t)) throw ParseError(lineno, "time must be a non-negative integer");
        if (fields[1] == fields[2]) {
            if (diag) diag->warnings.push_back("line " + std::to_string(lineno) + ": self-loop rejected");
            continue;
        }
        if (declared && t >= *declared) throw ParseError(lineno, "unknown timestamp " + fields[0]);
        const std::size_t p = node(fields[1]);
        const std::size_t q = node(fields[2]);
        edges.push_back({t, p, q, lineno});
        max_time = std::max(max_time, t);
    }
    const std::size_t count = declared ? *declared : (edges.empty() ? 0 : max_time + 1);
    if (count == 0) throw IoError("no snapshots");
    DynamicNetwork Y;
    Y.snapshots.assign(count, Snapshot(labels.size()));
    for (const auto& e : edges) {
        if (e.t >= count) throw ParseError(e.line, "unknown timestamp");
        if (Y.snapshots[e.t](e.p, e.q) && diag) ++diag->duplicate_edges;
        Y.snapshots[e.t].set(e.p, e.q);
    }
    Y.node_labels = std::move(labels);
    return Y;
}

DynamicNetwork load_edge_sequence(const std::filesystem::path& path, LoadDiagnostics* diag) {
    auto in = open_in(path);
    return parse_edge_sequence(in, diag);
}

void write_edge_sequence(std::ostream& out, const DynamicNetwork& Y) {
    Y.validate();
    out << "#snapshots\t" << Y.num_snapshots() << '\n';
    for (std::size_t p = 0; p < Y.num_nodes(); ++p) out << "#node\t" << node_label(Y, p) << '\n';
    for (std::size_t t = 0; t < Y.num_snapshots(); ++t) {
        for (std::size_t p = 0; p < Y.num_nodes(); ++p) {
            for (std::size_t q = 0; q < Y.num_nodes(); ++q) {
                if (Y.snapshots[t](p, q)) out << t << '\t' << node_label(Y, p) << '\t' << node_label(Y, q) << '\n';
            }
        }
    }
}

void save_edge_sequence(const std::filesystem::path& path, const DynamicNetwork& Y) {
    auto out = open_out(path);
    write_edge_sequence(out, Y);
    if (!out) throw IoError("failed writing " + path.string());
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw IoError("cannot format number");
    return std::string(buf, ptr);
}

json to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", num_array(m.values())}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto data = num_vector(j.at("data"));
    if (data.size() != m.values().size()) throw IoError("matrix data has the wrong length");
    m.values() = std::move(data);
    return m;
}

json to_json(const NodeSeries& s) {
    json data = json::array();
    for (const auto& m : s) data.push_back(to_json(m));
    return {{"times", s.size()}, {"slices", data}};
}

NodeSeries node_series_from_json(const json& j) {
    NodeSeries s;
    for (const auto& m : j.at("slices")) s.push_back(matrix_from_json(m));
    if (s.size() != j.at("times").get<std::size_t>()) throw IoError("node series has the wrong length");
    return s;
}

json to_json(const ModelParams& params) {
    return {{"format", "coevnet-params"},
            {"version", kFormatVersion},
            {"N", params.num_nodes()},
            {"K", params.num_roles()},
            {"B", to_json(params.B)},
            {"beta", num_array(params.beta)},
            {"w", to_json(params.w)},
            {"sigma_mu", num_array(params.sigma_mu)},
            {"alpha0", num_array(params.alpha0)},
            {"A", num_array(params.A)},
            {"rho", params.rho},
            {"static_slices", params.static_slices}};
}

ModelParams params_from_json(const json& j) {
    check_format(j, "coevnet-params");
    ModelParams p;
    p.B = matrix_from_json(j.at("B"));
    p.beta = num_vector(j.at("beta"));
    p.w = matrix_from_json(j.at("w"));
    p.sigma_mu = num_vector(j.at("sigma_mu"));
    p.alpha0 = num_vector(j.at("alpha0"));
    p.A = num_vector(j.at("A"));
    p.rho = j.at("rho").get<double>();
    p.static_slices = j.at("static_slices").get<bool>();
    if (p.num_nodes() != j.at("N").get<std::size_t>() || p.num_roles() != j.at("K").get<std::size_t>()) {
        throw IoError("parameter dimensions do not match their declared N and K");
    }
    p.validate();
    return p;
}

json to_json(const VariationalState& vs) {
    return {{"times", vs.num_times()},
            {"N", vs.num_nodes()},
            {"K", vs.num_roles()},
            {"gamma", to_json(vs.gamma)},
            {"sigma", to_json(vs.sigma)},
            {"zeta", to_json(vs.zeta)},
            {"phi_send", to_json(vs.phi_send)},
            {"phi_recv", to_json(vs.phi_recv)}};
}

VariationalState variational_state_from_json(const json& j) {
    VariationalState vs;
    vs.gamma = node_series_from_json(j.at("gamma"));
    vs.sigma = node_series_from_json(j.at("sigma"));
    vs.zeta = matrix_from_json(j.at("zeta"));
    vs.phi_send = pair_series_from_json(j.at("phi_send"));
    vs.phi_recv = pair_series_from_json(j.at("phi_recv"));
    if (vs.num_times() != j.at("times").get<std::size_t>() || vs.num_nodes() != j.at("N").get<std::size_t>() ||
        vs.num_roles() != j.at("K").get<std::size_t>()) {
        throw IoError("variational state dimensions do not match their declared sizes");
    }
    vs.validate();
    return vs;
}

json to_json(const GroundTruth& truth) {
    const auto& ind = truth.indicators;
    return {{"format", "coevnet-truth"},
            {"version", kFormatVersion},
            {"times", truth.memberships.mu.size()},
            {"N", truth.memberships.mu.empty() ? 0 : truth.memberships.mu.front().rows()},
            {"K", truth.memberships.mu.empty() ? 0 : truth.memberships.mu.front().cols()},
            {"mu", to_json(truth.memberships.mu)},
            {"pi", to_json(truth.memberships.pi)},
            {"indicators", {{"times", ind.times}, {"nodes", ind.nodes}, {"send", ind.send}, {"recv", ind.recv}}}};
}

GroundTruth truth_from_json(const json& j) {
    check_format(j, "coevnet-truth");
    GroundTruth truth;
    truth.memberships.mu = node_series_from_json(j.at("mu"));
    truth.memberships.pi = node_series_from_json(j.at("pi"));
    const auto& ind = j.at("indicators");
    truth.indicators = RoleIndicators(ind.at("times").get<std::size_t>(), ind.at("nodes").get<std::size_t>());
    truth.indicators.send = ind.at("send").get<std::vector<int>>();
    truth.indicators.recv = ind.at("recv").get<std::vector<int>>();
    const std::size_t cells = truth.indicators.times * truth.indicators.nodes * truth.indicators.nodes;
    if (truth.indicators.send.size() != cells || truth.indicators.recv.size() != cells) {
        throw IoError("role indicators have the wrong length");
    }
    if (truth.memberships.mu.size() != j.at("times").get<std::size_t>()) throw IoError("truth has the wrong length");
    return truth;
}

json to_json(const FitReport& report) {
    const auto& f = report.flags;
    return {{"format", "coevnet-fit-report"},
            {"version", kFormatVersion},
            {"membership_map", kMembershipMap},
            {"params", to_json(report.params)},
            {"variational", to_json(report.vs)},
            {"elbo_trace", num_array(report.elbo_trace)},
            {"trajectories", to_json(report.trajectories)},
            {"flags",
             {{"converged", f.converged},
              {"iterations", f.iterations},
              {"chosen_restart", f.chosen_restart},
              {"chain_elbos", num_array(f.chain_elbos)},
              {"estep_unconverged", f.estep_unconverged},
              {"influence_converged", f.influence_converged},
              {"last_estep_converged", f.last_estep_converged},
              {"max_sigma_residual", f.stationarity.max_sigma_residual},
              {"max_gamma_grad", f.stationarity.max_gamma_grad},
              {"diagnostics", f.diagnostics}}}};
}

FitReport report_from_json(const json& j) {
    check_format(j, "coevnet-fit-report");
    FitReport r;
    r.params = params_from_json(j.at("params"));
    r.vs = variational_state_from_json(j.at("variational"));
    r.elbo_trace = num_vector(j.at("elbo_trace"));
    r.trajectories = node_series_from_json(j.at("trajectories"));
    const auto& f = j.at("flags");
    r.flags.converged = f.at("converged").get<bool>();
    r.flags.iterations = f.at("iterations").get<int>();
    r.flags.chosen_restart = f.at("chosen_restart").get<int>();
    r.flags.chain_elbos = num_vector(f.at("chain_elbos"));
    r.flags.estep_unconverged = f.at("estep_unconverged").get<int>();
    r.flags.influence_converged = f.at("influence_converged").get<bool>();
    r.flags.last_estep_converged = f.at("last_estep_converged").get<bool>();
    r.flags.stationarity.max_sigma_residual = num(f.at("max_sigma_residual"));
    r.flags.stationarity.max_gamma_grad = num(f.at("max_gamma_grad"));
    r.flags.diagnostics = f.at("diagnostics").get<std::vector<std::string>>();
    return r;
}

json load_json(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void save_json(const std::filesystem::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(1) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

ScoreSeries load_scores(const std::filesystem::path& path, const DynamicNetwork& Y, bool flip, LoadDiagnostics* diag) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t p = 0; p < Y.num_nodes(); ++p) index.emplace(node_label(Y, p), p);
    ScoreSeries raw;
    raw.values.assign(Y.num_snapshots(), std::vector<std::optional<double>>(Y.num_nodes()));
    auto in = open_in(path);
    std::string line;
    auto warn = [&](std::size_t lineno, const std::string& msg) {
        if (diag) diag->warnings.push_back("line " + std::to_string(lineno) + ": " + msg);
    };
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (lineno == 1) {
            if (fields.size() != 3 || fields[0] != "node" || fields[1] != "time" || fields[2] != "score") {
                throw ParseError(lineno, "expected header node,time,score");
            }
            continue;
        }
        if (fields.size() != 3) throw ParseError(lineno, "expected node,time,score");
        std::size_t t = 0;
        if (!parse_number(fields[1], t)) throw ParseError(lineno, "time must be a non-negative integer");
        const auto it = index.find(fields[0]);
        if (it == index.end()) {
            warn(lineno, "unknown node " + fields[0] + " skipped");
            continue;
        }
        if (t >= Y.num_snapshots()) {
            warn(lineno, "time out of range skipped");
            continue;
        }
        if (fields[2].empty()) continue;  // explicitly missing
        double score = 0.0;
        if (!parse_number(fields[2], score) || !std::isfinite(score)) throw ParseError(lineno, "score is not a number");
        if (raw.values[t][it->second]) warn(lineno, "duplicate score; last value kept");
        raw.values[t][it->second] = score;
    }
    return rescale_scores(raw, flip);
}

std::vector<SponsorshipRecord> parse_sponsorship_records(std::istream& in) {
    std::vector<SponsorshipRecord> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (lineno == 1) {
            if (fields.size() != 4 || fields[0] != "time" || fields[1] != "bill" || fields[2] != "sponsor" ||
                fields[3] != "cosponsors") {
                throw ParseError(lineno, "expected header time,bill,sponsor,cosponsors");
            }
            continue;
        }
        if (fields.size() != 4) throw ParseError(lineno, "expected time,bill,sponsor,cosponsors");
        if (fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            throw ParseError(lineno, "time, bill and sponsor are required");
        }
        SponsorshipRecord rec{fields[0], fields[1], fields[2], {}};
        if (!fields[3].empty()) {
            for (auto& c : split(fields[3], ';')) {
                if (!c.empty()) rec.cosponsors.push_back(std::move(c));
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<SponsorshipRecord> load_sponsorship_records(const std::filesystem::path& path) {
    auto in = open_in(path);
    return parse_sponsorship_records(in);
}

DynamicNetwork build_cosponsorship_network(const std::vector<SponsorshipRecord>& records, int threshold) {
    if (threshold < 1) throw std::invalid_argument("threshold must be at least 1");
    if (records.empty()) throw IoError("no snapshots");

    // Slice order: numeric when every key is an integer.
    std::vector<std::string> keys;
    for (const auto& r : records) keys.push_back(r.time);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    const bool numeric = std::all_of(keys.begin(), keys.end(), [](const std::string& k) {
        long long v = 0;
        return parse_number(k, v);
    });
    if (numeric) {
        std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
            long long x = 0, y = 0;
            parse_number(a, x);
            parse_number(b, y);
            return x < y;
        });
    }
    std::map<std::string, std::size_t> slice;
    for (std::size_t i = 0; i < keys.size(); ++i) slice[keys[i]] = i;
    const std::size_t slices = keys.size();

    std::vector<std::string> labels;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<bool>> present;
    auto node = [&](const std::string& label, std::size_t s) {
        auto [it, inserted] = index.emplace(label, labels.size());
        if (inserted) {
            labels.push_back(label);
            present.emplace_back(slices, false);
        }
        present[it->second][s] = true;
        return it->second;
    };

    // Distinct bills of sponsor q cosponsored by p, per slice.
    std::vector<std::map<std::pair<std::size_t, std::size_t>, std::set<std::string>>> shared(slices);
    for (const auto& r : records) {
        const std::size_t s = slice.at(r.time);
        const std::size_t q = node(r.sponsor, s);
        for (const auto& c : r.cosponsors) {
            const std::size_t p = node(c, s);
            if (p == q) continue;
            shared[s][{p, q}].insert(r.bill);
        }
    }

    std::vector<std::size_t> keep(labels.size(), std::numeric_limits<std::size_t>::max());
    DynamicNetwork Y;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (std::all_of(present[p].begin(), present[p].end(), [](bool b) { return b; })) {
            keep[p] = Y.node_labels.size();
            Y.node_labels.push_back(labels[p]);
        }
    }
    Y.snapshots.assign(slices, Snapshot(Y.node_labels.size()));
    for (std::size_t s = 0; s < slices; ++s) {
        for (const auto& [pair, bills] : shared[s]) {
            const auto [p, q] = pair;
            if (static_cast<int>(bills.size()) < threshold) continue;
            if (keep[p] == std::numeric_limits<std::size_t>::max() || keep[q] == std::numeric_limits<std::size_t>::max()) continue;
            Y.snapshots[s].set(keep[p], keep[q]);
        }
    }
    return Y;
}

void save_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
    auto out = open_out(path);
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    };
    write_row(header);
    for (const auto& r : rows) write_row(r);
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace coevnet
