#pragma once

// File formats and dataset construction.
//
// Edge sequence (text): one `time<TAB>src<TAB>dst` per line; any run of
// whitespace separates fields and `#` starts a comment. The writer also
// emits `#snapshots<TAB>count` and one `#node<TAB>label` per node so that
// isolated nodes and trailing empty snapshots survive a round trip; the
// reader honours those two directives when present.
//
// Parameters, ground truth and fit reports are JSON documents with explicit
// dimension fields. Doubles are written in shortest round-trip form.
//
// Metric tables are CSV with a header row.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coevnet/em.hpp"
#include "coevnet/eval.hpp"
#include "coevnet/generator.hpp"

namespace coevnet {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parse failure at a given 1-based line.
class ParseError : public IoError {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct LoadDiagnostics {
    std::vector<std::string> warnings;  // e.g. rejected self-loop lines
    std::size_t duplicate_edges = 0;
};

DynamicNetwork parse_edge_sequence(std::istream& in, LoadDiagnostics* diag = nullptr);
DynamicNetwork load_edge_sequence(const std::filesystem::path& path, LoadDiagnostics* diag = nullptr);
void write_edge_sequence(std::ostream& out, const DynamicNetwork& Y);
void save_edge_sequence(const std::filesystem::path& path, const DynamicNetwork& Y);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double x);

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NodeSeries& s);
NodeSeries node_series_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const VariationalState& vs);
VariationalState variational_state_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GroundTruth& truth);
/// Memberships and role indicators; the network itself lives in the edge
/// file, so `network` is left empty.
GroundTruth truth_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitReport& report);
FitReport report_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Scores CSV `node,time,score` with a header row. Node labels are resolved
/// against the network; unknown labels and out-of-range times are skipped
/// with a warning. Raw scores are min-max rescaled to [0,1].
ScoreSeries load_scores(const std::filesystem::path& path, const DynamicNetwork& Y, bool flip = false,
                        LoadDiagnostics* diag = nullptr);

struct SponsorshipRecord {
    std::string time;  // congress or session key; slices sort by this value
    std::string bill;
    std::string sponsor;
    std::vector<std::string> cosponsors;
};

/// Records CSV `time,bill,sponsor,cosponsors` with a header row and
/// cosponsors separated by `;`. Times that parse as integers sort
/// numerically, otherwise lexicographically.
std::vector<SponsorshipRecord> load_sponsorship_records(const std::filesystem::path& path);
std::vector<SponsorshipRecord> parse_sponsorship_records(std::istream& in);

/// Edge p -> q at a slice iff p cosponsored at least `threshold` bills
/// sponsored by q in that slice. Only nodes appearing (as sponsor or
/// cosponsor) in every slice are kept, in order of first appearance.
DynamicNetwork build_cosponsorship_network(const std::vector<SponsorshipRecord>& records, int threshold);

/// Minimal CSV writer: header plus rows, no quoting (fields never contain
/// commas here).
void save_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);

}  // namespace coevnet
