#include "dalc/harness.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

namespace dalc {

using nlohmann::json;

namespace {

std::string fixed(double value, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    return buf;
}

std::string opt_fixed(const std::optional<double>& value, int precision) {
    return value ? fixed(*value, precision) : "-";
}

json answer_to_json(const CanonicalAnswer& answer) {
    return {{"kind", answer.is_numeric() ? "numeric" : "text"}, {"value", answer.value}};
}

json diversity_to_json(const DiversityReport& report) {
    return {{"mean_cosine", report.mean_cosine},
            {"effective_rank", report.effective_rank},
            {"per_agent_mean_cosine", report.per_agent_mean_cosine},
            {"singular_values", report.singular_values}};
}

}  // namespace

bool grade(const CanonicalAnswer& consensus, const CanonicalAnswer& gold) {
    return consensus == gold;
}

RunSummary summarize(const std::string& method, const std::vector<RecordStats>& stats) {
    RunSummary summary;
    summary.method = method;
    summary.total = static_cast<int>(stats.size());

    int attempted = 0;
    int correct = 0;
    long tokens = 0;
    struct Mean {
        double sum = 0.0;
        int n = 0;
        void add(const std::optional<double>& v) {
            if (v) {
                sum += *v;
                ++n;
            }
        }
        std::optional<double> value() const {
            return n > 0 ? std::optional(sum / n) : std::nullopt;
        }
    };
    Mean raw_cos, raw_rank, proj_cos, proj_rank;

    for (const auto& record : stats) {
        if (record.failed) {
            ++summary.failed;
            continue;
        }
        ++attempted;
        correct += record.correct ? 1 : 0;
        tokens += record.total_tokens;
        raw_cos.add(record.raw_cosine);
        raw_rank.add(record.raw_rank);
        proj_cos.add(record.proj_cosine);
        proj_rank.add(record.proj_rank);
    }

    if (attempted > 0) {
        summary.accuracy = static_cast<double>(correct) / attempted;
        summary.mean_tokens = static_cast<double>(tokens) / attempted;
    }
    summary.mean_raw_cosine = raw_cos.value();
    summary.mean_raw_rank = raw_rank.value();
    summary.mean_proj_cosine = proj_cos.value();
    summary.mean_proj_rank = proj_rank.value();
    return summary;
}

std::string format_summary(const RunSummary& summary) {
    std::string accuracy = summary.accuracy ? fixed(*summary.accuracy * 100.0, 1) + "%" : "-";
    return "method=" + summary.method + " n=" + std::to_string(summary.total) +
           " failed=" + std::to_string(summary.failed) + " acc=" + accuracy +
           " tokens=" + opt_fixed(summary.mean_tokens, 1) +
           " raw_cos=" + opt_fixed(summary.mean_raw_cosine, 3) +
           " raw_rank=" + opt_fixed(summary.mean_raw_rank, 2) +
           " proj_cos=" + opt_fixed(summary.mean_proj_cosine, 3) +
           " proj_rank=" + opt_fixed(summary.mean_proj_rank, 2);
}

json outcome_to_json(const QuestionOutcome& outcome, bool with_embeddings,
                     bool deterministic) {
    json agents = json::array();
    for (const AgentTrace& trace : outcome.agents) {
        json agent = {{"role", trace.role},
                      {"rationale", trace.rationale},
                      {"answer_text", trace.answer_text},
                      {"answer", answer_to_json(trace.answer)},
                      {"think_tokens", trace.think_tokens},
                      {"answer_tokens", trace.answer_tokens},
                      {"tokens_estimated", trace.tokens_estimated}};
        if (with_embeddings && !trace.embedding.empty())
            agent["embedding"] = trace.embedding;
        agents.push_back(std::move(agent));
    }

    json out;
    out["id"] = outcome.question_id;
    out["agents"] = std::move(agents);
    out["consensus"] = answer_to_json(outcome.consensus);
    out["total_tokens"] = outcome.total_tokens;
    out["wall_time_s"] = deterministic ? 0.0 : outcome.wall_time_s;
    out["failed"] = outcome.failed;
    if (!outcome.failure.empty()) out["failure"] = outcome.failure;
    if (!outcome.weights.empty()) out["weights"] = outcome.weights;
    if (outcome.raw_diversity) out["raw_diversity"] = diversity_to_json(*outcome.raw_diversity);
    if (outcome.projected_diversity)
        out["projected_diversity"] = diversity_to_json(*outcome.projected_diversity);
    return out;
}

json record_to_json(const RunRecord& record, bool with_embeddings, bool deterministic) {
    json out = outcome_to_json(record.outcome, with_embeddings, deterministic);
    out["type"] = "record";
    out["id"] = record.id;
    if (record.level) out["level"] = *record.level;
    out["gold"] = answer_to_json(record.gold);
    out["correct"] = record.correct;
    return out;
}

ParsedLog read_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open log: " + path.string());

    ParsedLog log;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json parsed = json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object())
            throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                              ": not a JSON object");
        const std::string type = parsed.value("type", "");
        if (type == "meta") {
            if (!log.meta.is_null())
                throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                                  ": second meta record");
            log.meta = std::move(parsed);
        } else if (type == "record") {
            log.records.push_back(std::move(parsed));
        } else {
            throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                              ": unknown record type \"" + type + "\"");
        }
    }
    if (log.meta.is_null()) throw ConfigError(path.string() + ": no meta record");
    return log;
}

RecordStats stats_from_record(const json& record) {
    RecordStats stats;
    stats.failed = record.value("failed", false);
    stats.correct = record.value("correct", false);
    stats.total_tokens = record.value("total_tokens", static_cast<long>(0));
    if (record.contains("level")) stats.level = record.at("level").get<int>();
    if (record.contains("raw_diversity")) {
        const json& raw = record.at("raw_diversity");
        stats.raw_cosine = raw.at("mean_cosine").get<double>();
        stats.raw_rank = raw.at("effective_rank").get<double>();
    }
    if (record.contains("projected_diversity")) {
        const json& proj = record.at("projected_diversity");
        stats.proj_cosine = proj.at("mean_cosine").get<double>();
        stats.proj_rank = proj.at("effective_rank").get<double>();
    }
    return stats;
}

RunSummary summarize_log(const std::filesystem::path& path) {
    const ParsedLog log = read_log(path);
    std::vector<RecordStats> stats;
    stats.reserve(log.records.size());
    for (const json& record : log.records) stats.push_back(stats_from_record(record));
    return summarize(log.meta.value("method", std::string("?")), stats);
}

}  // namespace dalc
