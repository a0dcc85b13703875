#include <string>

#include <json.hpp>

#include "dalc/geometry.hpp"
#include "dalc/harness.hpp"

namespace dalc {

using nlohmann::json;

namespace {

std::string fixed3(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    return buf;
}

bool all_have_embeddings(const json& agents) {
    for (const json& agent : agents)
        if (!agent.contains("embedding") || agent.at("embedding").empty()) return false;
    return true;
}

bool all_have_rationales(const json& agents) {
    for (const json& agent : agents)
        if (agent.value("rationale", std::string()).empty()) return false;
    return true;
}

}  // namespace

ProbeResult probe(const std::filesystem::path& log_path, const EncoderHandle* encoder) {
    const ParsedLog log = read_log(log_path);

    ProbeResult result;
    double cosine_sum = 0.0;
    double rank_sum = 0.0;
    for (const json& record : log.records) {
        if (record.value("failed", false)) continue;
        if (!record.contains("agents")) continue;
        const json& agents = record.at("agents");
        if (agents.size() < 2) continue;

        Matrix embeddings;
        if (all_have_embeddings(agents)) {
            std::vector<std::vector<double>> rows;
            for (const json& agent : agents)
                rows.push_back(agent.at("embedding").get<std::vector<double>>());
            embeddings = Matrix::from_rows(rows);
        } else if (!all_have_rationales(agents)) {
            continue;  // baseline records carry no rationales to measure
        } else if (encoder == nullptr) {
            throw ConfigError(log_path.string() +
                              ": records carry no embeddings; supply an encoder to "
                              "re-embed the rationales");
        } else {
            std::vector<std::vector<double>> rows;
            for (const json& agent : agents) {
                EmbedRequest request{encoder->model, agent.at("rationale").get<std::string>()};
                rows.push_back(encoder->backend->embed(request).values);
            }
            embeddings = Matrix::from_rows(rows);
        }

        DiversityReport report = diversity_report(embeddings);
        cosine_sum += report.mean_cosine;
        rank_sum += report.effective_rank;
        if (result.per_question.empty()) result.committee_size = embeddings.rows();
        result.per_question.push_back(std::move(report));
    }

    if (result.per_question.empty())
        throw ConfigError(log_path.string() + ": no records usable for a diversity probe");

    result.questions = static_cast<int>(result.per_question.size());
    result.mean_cosine = cosine_sum / result.questions;
    result.mean_effective_rank = rank_sum / result.questions;
    result.warning = result.mean_cosine > kCollapseWarnThreshold;
    if (result.warning)
        result.warning_text = "warning: mean pairwise cosine " + fixed3(result.mean_cosine) +
                              " exceeds " + fixed3(kCollapseWarnThreshold) +
                              "; the rationales are nearly collinear and add little "
                              "independent evidence";
    return result;
}

}  // namespace dalc
