#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dalc/backends.hpp"
#include "dalc/harness.hpp"

namespace {

using dalc::ConfigError;
using nlohmann::json;

// Flag values stay unset unless given, so the precedence chain
// (CLI > config file > environment > defaults) can be resolved afterwards.
struct RunFlags {
    std::optional<std::string> method;
    std::optional<std::string> model;
    std::optional<std::string> encoder;
    std::optional<std::string> dataset;
    std::optional<std::string> out;
    std::optional<std::string> endpoint;
    std::optional<int> limit;
    std::optional<int> stratify;
    std::optional<std::uint64_t> seed;
    std::optional<int> concurrency;
    std::optional<double> tau;
    std::optional<int> hint_chars;
    std::optional<int> think_tokens;
    std::optional<int> answer_tokens;
    std::optional<double> temperature;
    std::optional<int> committee;
    std::optional<int> sc_samples;
    std::optional<double> sim_cosine;
    std::optional<double> sim_wrong_rate;
    bool simulate = false;
    bool no_hints = false;
    bool record_embeddings = false;
};

void apply_config_file(const std::string& path, dalc::RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json parsed = json::parse(in, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
        throw ConfigError(path + ": not a JSON object");

    auto bad = [&](const std::string& key, const char* want) -> ConfigError {
        return ConfigError(path + ": key \"" + key + "\" must be " + want);
    };
    for (const auto& [key, value] : parsed.items()) {
        auto str = [&] {
            if (!value.is_string()) throw bad(key, "a string");
            return value.get<std::string>();
        };
        auto integer = [&] {
            if (!value.is_number_integer()) throw bad(key, "an integer");
            return value.get<int>();
        };
        auto number = [&] {
            if (!value.is_number()) throw bad(key, "a number");
            return value.get<double>();
        };
        auto boolean = [&] {
            if (!value.is_boolean()) throw bad(key, "a boolean");
            return value.get<bool>();
        };
        if (key == "method") cfg.method = dalc::parse_method(str());
        else if (key == "model") cfg.model = str();
        else if (key == "encoder") cfg.encoder = str();
        else if (key == "dataset") cfg.dataset = str();
        else if (key == "out") cfg.out = str();
        else if (key == "endpoint") cfg.endpoint = str();
        else if (key == "limit") cfg.limit = integer();
        else if (key == "stratify") cfg.stratify_per_level = integer();
        else if (key == "seed") {
            if (!value.is_number_unsigned() && !value.is_number_integer())
                throw bad(key, "an integer");
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "concurrency") cfg.concurrency = integer();
        else if (key == "simulate") cfg.simulate = boolean();
        else if (key == "no_hints") cfg.force_no_hints = boolean();
        else if (key == "record_embeddings") cfg.record_embeddings = boolean();
        else if (key == "tau") cfg.protocol.projection.tau = number();
        else if (key == "hint_chars") cfg.protocol.hint_char_limit = integer();
        else if (key == "think_tokens") cfg.protocol.think_max_tokens = integer();
        else if (key == "answer_tokens") cfg.protocol.answer_max_tokens = integer();
        else if (key == "temperature") cfg.protocol.temperature = number();
        else if (key == "committee") cfg.protocol.committee_size = integer();
        else if (key == "sc_samples") cfg.protocol.sc_samples = integer();
        else if (key == "sim_cosine") cfg.sim_target_cosine = number();
        else if (key == "sim_wrong_rate") cfg.sim_wrong_rate = number();
        else throw ConfigError(path + ": unknown key \"" + key + "\"");
    }
}

int run_command(const RunFlags& flags, const std::optional<std::string>& config_path) {
    dalc::RunConfig cfg;
    if (const char* endpoint = std::getenv("DALC_ENDPOINT")) cfg.endpoint = endpoint;
    if (config_path) apply_config_file(*config_path, cfg);

    if (flags.method) cfg.method = dalc::parse_method(*flags.method);
    if (flags.model) cfg.model = *flags.model;
    if (flags.encoder) cfg.encoder = *flags.encoder;
    if (flags.dataset) cfg.dataset = *flags.dataset;
    if (flags.out) cfg.out = *flags.out;
    if (flags.endpoint) cfg.endpoint = *flags.endpoint;
    if (flags.limit) cfg.limit = *flags.limit;
    if (flags.stratify) cfg.stratify_per_level = *flags.stratify;
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.concurrency) cfg.concurrency = *flags.concurrency;
    if (flags.tau) cfg.protocol.projection.tau = *flags.tau;
    if (flags.hint_chars) cfg.protocol.hint_char_limit = *flags.hint_chars;
    if (flags.think_tokens) cfg.protocol.think_max_tokens = *flags.think_tokens;
    if (flags.answer_tokens) cfg.protocol.answer_max_tokens = *flags.answer_tokens;
    if (flags.temperature) cfg.protocol.temperature = *flags.temperature;
    if (flags.committee) cfg.protocol.committee_size = *flags.committee;
    if (flags.sc_samples) cfg.protocol.sc_samples = *flags.sc_samples;
    if (flags.sim_cosine) cfg.sim_target_cosine = *flags.sim_cosine;
    if (flags.sim_wrong_rate) cfg.sim_wrong_rate = *flags.sim_wrong_rate;
    if (flags.simulate) cfg.simulate = true;
    if (flags.no_hints) cfg.force_no_hints = true;
    if (flags.record_embeddings) cfg.record_embeddings = true;

    if (cfg.dataset.empty()) throw ConfigError("no dataset given (--dataset)");
    if (cfg.out.empty())
        cfg.out = "dalc-" + dalc::method_name(cfg.method) + "-seed" +
                  std::to_string(cfg.seed) + ".jsonl";

    const dalc::RunResult result = dalc::run_experiment(cfg);
    if (result.had_failures) {
        std::cerr << result.summary.failed << " of " << result.summary.total
                  << " questions failed; see " << result.log_path.string() << "\n";
        return 1;
    }
    return 0;
}

int probe_command(const std::string& log_path, const std::optional<std::string>& encoder_name,
                  const std::optional<std::string>& endpoint) {
    std::optional<dalc::EncoderHandle> encoder;
    if (encoder_name) {
        dalc::HttpBackendConfig http;
        if (endpoint) http.base_url = *endpoint;
        else if (const char* env = std::getenv("DALC_ENDPOINT")) http.base_url = env;
        encoder = dalc::EncoderHandle{*encoder_name,
                                      std::make_shared<dalc::HttpBackend>(http)};
    }

    const dalc::ProbeResult result =
        dalc::probe(log_path, encoder ? &*encoder : nullptr);
    for (std::size_t i = 0; i < result.per_question.size(); ++i) {
        const dalc::DiversityReport& report = result.per_question[i];
        std::printf("question %zu: cosine=%.3f rank=%.2f\n", i + 1, report.mean_cosine,
                    report.effective_rank);
    }
    std::printf("aggregate over %d questions (committee of %zu): cosine=%.3f rank=%.2f\n",
                result.questions, result.committee_size, result.mean_cosine,
                result.mean_effective_rank);
    if (result.warning) std::printf("%s\n", result.warning_text.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diversity-aware consensus over committees of role-conditioned agents"};
    app.require_subcommand(1);

    RunFlags flags;
    std::optional<std::string> config_path;
    CLI::App* run = app.add_subcommand("run", "run one method over a dataset");
    run->add_option("--method", flags.method,
                    "single, sc, dalc-id, dalc-svd, dalc-gs or dalc-nohints");
    run->add_option("--model", flags.model, "generation model name");
    run->add_option("--encoder", flags.encoder, "embedding model name");
    run->add_option("--dataset", flags.dataset, "JSONL dataset path");
    run->add_option("--out", flags.out, "output log path (JSONL)");
    run->add_option("--endpoint", flags.endpoint, "backend base URL (or DALC_ENDPOINT)");
    run->add_option("--config", config_path, "JSON config file; flags override it");
    run->add_option("--limit", flags.limit, "use only the first N questions");
    run->add_option("--stratify", flags.stratify, "sample N questions per level");
    run->add_option("--seed", flags.seed, "run seed");
    run->add_option("--concurrency", flags.concurrency, "worker count (0 = default)");
    run->add_option("--tau", flags.tau, "spectrum exponent for dalc-svd");
    run->add_option("--hint-chars", flags.hint_chars, "hint truncation length");
    run->add_option("--think-tokens", flags.think_tokens, "phase-1 token cap");
    run->add_option("--answer-tokens", flags.answer_tokens, "full-generation token cap");
    run->add_option("--temperature", flags.temperature, "sampling temperature");
    run->add_option("--committee", flags.committee, "committee size");
    run->add_option("--sc-samples", flags.sc_samples, "self-consistency sample count");
    run->add_option("--sim-cosine", flags.sim_cosine, "simulator target mean cosine");
    run->add_option("--sim-wrong-rate", flags.sim_wrong_rate, "simulator wrong-answer rate");
    run->add_flag("--simulate", flags.simulate, "use the deterministic simulator");
    run->add_flag("--no-hints", flags.no_hints, "disable phase-3 hints");
    run->add_flag("--record-embeddings", flags.record_embeddings,
                  "store agent embeddings in the log");

    std::string probe_in;
    std::optional<std::string> probe_encoder;
    std::optional<std::string> probe_endpoint;
    CLI::App* probe = app.add_subcommand("probe", "measure rationale diversity in a log");
    probe->add_option("--in", probe_in, "results log to probe")->required();
    probe->add_option("--encoder", probe_encoder, "re-embed rationales with this model");
    probe->add_option("--endpoint", probe_endpoint, "backend base URL (or DALC_ENDPOINT)");

    std::vector<std::string> report_in;
    std::string report_format = "text";
    CLI::App* report = app.add_subcommand("report", "render comparison tables from logs");
    report->add_option("--in", report_in, "results logs")->required();
    report->add_option("--format", report_format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(run)) return run_command(flags, config_path);
        if (app.got_subcommand(probe))
            return probe_command(probe_in, probe_encoder, probe_endpoint);
        std::vector<std::filesystem::path> logs(report_in.begin(), report_in.end());
        std::cout << dalc::emit_report(logs, report_format == "csv"
                                                 ? dalc::ReportFormat::Csv
                                                 : dalc::ReportFormat::Text);
        return 0;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
