#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dalc/consensus.hpp"
#include "dalc/protocol.hpp"

namespace dalc {

// Aggregate mean cosine above this makes the probe warn. Committees this
// bunched sit near effective rank 2, so the third agent contributes almost
// no independent direction.
inline constexpr double kCollapseWarnThreshold = 0.88;

// Bad flags, bad config files, unusable datasets. The CLI maps this to
// exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetItem {
    std::string id;
    std::string question;
    std::string answer_raw;
    CanonicalAnswer gold;
    std::optional<int> level;
};

// One JSONL record per line: {"id"?, "question", "answer", "level"?}.
// Answers containing "####" have the gold extracted from after the marker.
// Missing ids become the line number; duplicates and malformed lines throw
// ConfigError naming the line.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path);

// `per_level` items per distinct level, chosen deterministically from
// `seed`, returned in stable (level, id) order. Items must all carry
// levels; a level with too few items throws ConfigError naming it.
std::vector<DatasetItem> stratified_sample(const std::vector<DatasetItem>& items,
                                           int per_level, std::uint64_t seed);

enum class Method { Single, SelfConsistency, DalcId, DalcSvd, DalcGs, DalcNoHints };

Method parse_method(const std::string& name);  // throws ConfigError
std::string method_name(Method method);

// Applies the method's fixed choices (projection kind, hints flag) onto a
// protocol config.
void apply_method(Method method, ProtocolConfig& protocol);

struct RunConfig {
    Method method = Method::DalcGs;
    std::string model = "llama3.2";
    std::string encoder = "nomic-embed-text";
    std::filesystem::path dataset;
    std::filesystem::path out;
    int limit = 0;              // 0 = all items
    int stratify_per_level = 0; // 0 = no stratified sampling
    std::uint64_t seed = 42;
    ProtocolConfig protocol;
    bool force_no_hints = false;  // applied after the method mapping
    bool simulate = false;
    bool record_embeddings = false;
    int concurrency = 0;        // 0 = per-backend default
    std::string endpoint;       // live backend base URL
    // Simulator knobs; target cosine / dim default from the encoder name.
    std::optional<double> sim_target_cosine;
    double sim_wrong_rate = 0.15;
};

struct RunRecord {
    std::string id;
    std::optional<int> level;
    CanonicalAnswer gold;
    QuestionOutcome outcome;
    bool correct = false;
};

// The per-record numbers every summary is recomputed from.
struct RecordStats {
    bool failed = false;
    bool correct = false;
    long total_tokens = 0;
    std::optional<int> level;
    std::optional<double> raw_cosine;
    std::optional<double> raw_rank;
    std::optional<double> proj_cosine;
    std::optional<double> proj_rank;
};

struct RunSummary {
    std::string method;
    int total = 0;
    int failed = 0;
    std::optional<double> accuracy;  // over non-failed questions
    std::optional<double> mean_tokens;
    std::optional<double> mean_raw_cosine;
    std::optional<double> mean_raw_rank;
    std::optional<double> mean_proj_cosine;
    std::optional<double> mean_proj_rank;
};

RunSummary summarize(const std::string& method, const std::vector<RecordStats>& stats);
std::string format_summary(const RunSummary& summary);

// Exact canonical equality.
bool grade(const CanonicalAnswer& consensus, const CanonicalAnswer& gold);

struct RunResult {
    std::filesystem::path log_path;
    RunSummary summary;
    bool had_failures = false;
};

// Executes the configured method over the dataset with a bounded worker
// pool and writes one metadata record plus one RunRecord per question, in
// input order, to cfg.out (JSONL). Prints the summary row to stdout.
// Simulated runs zero timestamps and wall times so identical seeds produce
// byte-identical logs.
RunResult run_experiment(const RunConfig& cfg);

// --- log records ---------------------------------------------------------

nlohmann::json outcome_to_json(const QuestionOutcome& outcome, bool with_embeddings,
                               bool deterministic);
nlohmann::json record_to_json(const RunRecord& record, bool with_embeddings,
                              bool deterministic);

struct ParsedLog {
    nlohmann::json meta;
    std::vector<nlohmann::json> records;
};

ParsedLog read_log(const std::filesystem::path& path);
RecordStats stats_from_record(const nlohmann::json& record);
RunSummary summarize_log(const std::filesystem::path& path);

// --- probe ----------------------------------------------------------------

struct ProbeResult {
    int questions = 0;
    double mean_cosine = 0.0;
    double mean_effective_rank = 0.0;
    std::size_t committee_size = 0;
    bool warning = false;
    std::string warning_text;
    std::vector<DiversityReport> per_question;
};

// Reads a results log and reports per-question and aggregate diversity.
// Records carrying embeddings are measured directly; otherwise rationales
// are re-embedded through `encoder` when one is supplied. Warns when the
// aggregate mean cosine exceeds kCollapseWarnThreshold.
ProbeResult probe(const std::filesystem::path& log_path,
                  const EncoderHandle* encoder = nullptr);

// --- report ----------------------------------------------------------------

enum class ReportFormat { Text, Csv };

// Renders comparison tables from one or more result logs: the method
// summary table, a per-level breakdown when every log carries levels, a
// run-to-run delta table when exactly two logs share a method, and an
// encoder comparison when encoders differ. Logs over different datasets are
// an error.
std::string emit_report(const std::vector<std::filesystem::path>& logs, ReportFormat format);

}  // namespace dalc
