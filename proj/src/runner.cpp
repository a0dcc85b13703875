#include <atomic>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "dalc/harness.hpp"
#include "dalc/rng.hpp"

namespace dalc {

using nlohmann::json;

namespace {

const RoleProfile kNeutralRole{
    "solo",
    "You are a careful problem solver. Work through the problem and give a "
    "definite final answer."};

bool is_dalc(Method method) {
    return method != Method::Single && method != Method::SelfConsistency;
}

// Simulated encoders differ in width and in how tightly their committees
// bunch, mirroring the spread seen across real embedding models.
struct SimEncoderProfile {
    std::size_t dim;
    double target_cosine;
};

SimEncoderProfile sim_encoder_profile(const std::string& encoder) {
    if (encoder.find("mxbai") != std::string::npos) return {1024, 0.908};
    return {768, 0.888};
}

struct Backends {
    std::shared_ptr<TextGenerator> generator;
    std::shared_ptr<TextEmbedder> embedder;
    int default_concurrency = 2;
    std::optional<double> sim_target;
};

Backends make_backends(const RunConfig& cfg) {
    Backends backends;
    if (cfg.simulate) {
        const SimEncoderProfile profile = sim_encoder_profile(cfg.encoder);
        SimulatorConfig sim;
        sim.seed = cfg.seed;
        sim.embedding_dim = profile.dim;
        sim.target_cosine = cfg.sim_target_cosine.value_or(profile.target_cosine);
        sim.wrong_answer_rate = cfg.sim_wrong_rate;
        auto backend = std::make_shared<SimulatedBackend>(sim);
        backends.generator = backend;
        backends.embedder = backend;
        backends.default_concurrency = 8;
        backends.sim_target = sim.target_cosine;
    } else {
        HttpBackendConfig http;
        if (!cfg.endpoint.empty()) http.base_url = cfg.endpoint;
        auto backend = std::make_shared<HttpBackend>(http);
        backends.generator = backend;
        backends.embedder = backend;
        backends.default_concurrency = 2;
    }
    return backends;
}

std::string hash_ids(const std::vector<DatasetItem>& items) {
    std::string joined;
    for (const auto& item : items) {
        joined += item.id;
        joined += '\n';
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(joined)));
    return buf;
}

json build_meta(const RunConfig& cfg, const ProtocolConfig& protocol,
                const std::vector<DatasetItem>& items,
                const std::vector<RoleProfile>& roles, const Backends& backends,
                int concurrency) {
    json meta;
    meta["type"] = "meta";
    meta["method"] = method_name(cfg.method);
    meta["model"] = cfg.model;
    meta["encoder"] = cfg.encoder;
    meta["generator_id"] = backends.generator->id();
    meta["encoder_id"] = backends.embedder->id();
    meta["dataset"] = cfg.dataset.string();
    meta["dataset_ids_hash"] = hash_ids(items);
    meta["questions"] = items.size();
    meta["seed"] = cfg.seed;
    meta["simulate"] = cfg.simulate;
    meta["record_embeddings"] = cfg.record_embeddings;
    meta["concurrency"] = concurrency;
    meta["prompt_template"] = std::string(kPromptTemplateVersion);
    meta["committee_size"] = protocol.committee_size;
    meta["sc_samples"] = protocol.sc_samples;
    meta["think_tokens"] = protocol.think_max_tokens;
    meta["answer_tokens"] = protocol.answer_max_tokens;
    meta["temperature"] = protocol.temperature;
    meta["hints"] = protocol.hints_enabled;
    meta["hint_chars"] = protocol.hint_char_limit;
    meta["projection"] = to_string(protocol.projection.variant);
    meta["tau"] = protocol.projection.tau;
    json role_list = json::array();
    for (const RoleProfile& role : roles)
        role_list.push_back({{"name", role.name}, {"system_prompt", role.system_prompt}});
    meta["roles"] = std::move(role_list);
    if (cfg.simulate) {
        meta["sim_target_cosine"] = *backends.sim_target;
        meta["sim_wrong_rate"] = cfg.sim_wrong_rate;
    }
    meta["timestamp_unix"] = cfg.simulate ? 0 : static_cast<long>(std::time(nullptr));
    return meta;
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg) {
    ProtocolConfig protocol = cfg.protocol;
    apply_method(cfg.method, protocol);
    if (cfg.force_no_hints) protocol.hints_enabled = false;
    protocol.seed = cfg.seed;
    try {
        protocol.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.out.empty()) throw ConfigError("output log path required");

    std::vector<DatasetItem> items = load_dataset(cfg.dataset);
    if (cfg.stratify_per_level > 0)
        items = stratified_sample(items, cfg.stratify_per_level, cfg.seed);
    if (cfg.limit > 0 && items.size() > static_cast<std::size_t>(cfg.limit))
        items.resize(cfg.limit);

    const Backends backends = make_backends(cfg);
    const EncoderHandle encoder{cfg.encoder, backends.embedder};
    const AgentHandle solo{kNeutralRole, cfg.model, backends.generator};
    std::vector<RoleProfile> roles{kNeutralRole};
    std::vector<AgentHandle> committee;
    if (is_dalc(cfg.method)) {
        roles = default_roles(protocol.committee_size);
        for (const RoleProfile& role : roles)
            committee.push_back({role, cfg.model, backends.generator});
    }

    const int concurrency =
        std::max(1, std::min<int>(cfg.concurrency > 0 ? cfg.concurrency
                                                      : backends.default_concurrency,
                                  static_cast<int>(items.size())));

    if (cfg.out.has_parent_path()) std::filesystem::create_directories(cfg.out.parent_path());
    std::ofstream out(cfg.out, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write log: " + cfg.out.string());
    out << build_meta(cfg, protocol, items, roles, backends, concurrency).dump() << "\n";
    out.flush();

    auto solve = [&](const DatasetItem& item) -> QuestionOutcome {
        switch (cfg.method) {
            case Method::Single:
                return run_single(item.id, item.question, solo, protocol);
            case Method::SelfConsistency:
                return run_self_consistency(item.id, item.question, solo, protocol);
            default:
                return run_dalc(item.id, item.question, committee, encoder, protocol);
        }
    };

    // Workers pull the next question index and block only to keep the log in
    // input order; a fatal error aborts the pool but leaves the records
    // already written, so a partial log survives a mid-run outage.
    std::vector<RecordStats> stats(items.size());
    std::atomic<std::size_t> next_item{0};
    std::atomic<bool> any_failed{false};
    std::mutex write_mutex;
    std::condition_variable write_cv;
    std::size_t next_to_write = 0;
    bool abort = false;
    std::exception_ptr fatal;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next_item.fetch_add(1);
            if (i >= items.size()) return;
            {
                std::lock_guard lock(write_mutex);
                if (abort) return;
            }
            RunRecord record;
            record.id = items[i].id;
            record.level = items[i].level;
            record.gold = items[i].gold;
            try {
                record.outcome = solve(items[i]);
            } catch (...) {
                std::lock_guard lock(write_mutex);
                if (!fatal) fatal = std::current_exception();
                abort = true;
                write_cv.notify_all();
                return;
            }
            if (record.outcome.failed) any_failed = true;
            record.correct =
                !record.outcome.failed && grade(record.outcome.consensus, record.gold);
            const json line = record_to_json(record, cfg.record_embeddings, cfg.simulate);
            stats[i] = stats_from_record(line);

            std::unique_lock lock(write_mutex);
            write_cv.wait(lock, [&] { return abort || next_to_write == i; });
            if (abort) return;
            out << line.dump() << "\n";
            out.flush();
            ++next_to_write;
            write_cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(concurrency);
    for (int w = 0; w < concurrency; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    out.flush();
    if (fatal) std::rethrow_exception(fatal);

    RunResult result;
    result.log_path = cfg.out;
    result.summary = summarize(method_name(cfg.method), stats);
    result.had_failures = any_failed.load();
    std::cout << format_summary(result.summary) << "\n";
    return result;
}

}  // namespace dalc
