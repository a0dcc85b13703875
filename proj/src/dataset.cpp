#include "dalc/harness.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "dalc/rng.hpp"

namespace dalc {

using nlohmann::json;

namespace {

[[noreturn]] void fail_line(const std::filesystem::path& path, int line_no,
                            const std::string& what) {
    throw ConfigError(path.string() + ": line " + std::to_string(line_no) + ": " + what);
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset: " + path.string());

    std::vector<DatasetItem> items;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;

        const json parsed = json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object())
            fail_line(path, line_no, "not a JSON object");

        DatasetItem item;
        auto question = parsed.find("question");
        if (question == parsed.end() || !question->is_string())
            fail_line(path, line_no, "missing string field \"question\"");
        item.question = question->get<std::string>();

        auto answer = parsed.find("answer");
        if (answer == parsed.end())
            fail_line(path, line_no, "missing field \"answer\"");
        if (answer->is_string())
            item.answer_raw = answer->get<std::string>();
        else if (answer->is_number())
            item.answer_raw = answer->dump();
        else
            fail_line(path, line_no, "field \"answer\" must be a string or number");

        item.gold = canonicalize_answer(item.answer_raw);
        if (item.gold.value.empty())
            fail_line(path, line_no, "answer yields an empty gold value");

        auto id = parsed.find("id");
        if (id == parsed.end())
            item.id = std::to_string(line_no);
        else if (id->is_string())
            item.id = id->get<std::string>();
        else if (id->is_number_integer())
            item.id = id->dump();
        else
            fail_line(path, line_no, "field \"id\" must be a string or integer");
        if (!seen_ids.insert(item.id).second)
            fail_line(path, line_no, "duplicate id \"" + item.id + "\"");

        auto level = parsed.find("level");
        if (level != parsed.end()) {
            if (!level->is_number_integer())
                fail_line(path, line_no, "field \"level\" must be an integer");
            item.level = level->get<int>();
        }

        items.push_back(std::move(item));
    }
    if (items.empty()) throw ConfigError("dataset is empty: " + path.string());
    return items;
}

std::vector<DatasetItem> stratified_sample(const std::vector<DatasetItem>& items,
                                           int per_level, std::uint64_t seed) {
    if (per_level < 0) throw ConfigError("per-level sample size must be >= 0");
    if (per_level == 0) return {};

    std::map<int, std::vector<std::size_t>> by_level;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].level)
            throw ConfigError("stratified sampling needs a level on every item; item \"" +
                              items[i].id + "\" has none");
        by_level[*items[i].level].push_back(i);
    }

    std::vector<DatasetItem> sample;
    sample.reserve(by_level.size() * static_cast<std::size_t>(per_level));
    for (auto& [level, pool] : by_level) {
        if (pool.size() < static_cast<std::size_t>(per_level))
            throw ConfigError("level " + std::to_string(level) + " has only " +
                              std::to_string(pool.size()) + " items, need " +
                              std::to_string(per_level));
        // Sort the pool by id so the draw is independent of input order, then
        // take a partial Fisher-Yates prefix.
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
            return items[a].id < items[b].id;
        });
        Rng rng(mix64(seed, static_cast<std::uint64_t>(level)));
        for (int k = 0; k < per_level; ++k) {
            const std::size_t j = k + rng.bounded(pool.size() - k);
            std::swap(pool[k], pool[j]);
            sample.push_back(items[pool[k]]);
        }
    }

    std::sort(sample.begin(), sample.end(), [](const DatasetItem& a, const DatasetItem& b) {
        return std::pair(*a.level, a.id) < std::pair(*b.level, b.id);
    });
    return sample;
}

Method parse_method(const std::string& name) {
    if (name == "single") return Method::Single;
    if (name == "sc") return Method::SelfConsistency;
    if (name == "dalc-id") return Method::DalcId;
    if (name == "dalc-svd") return Method::DalcSvd;
    if (name == "dalc-gs") return Method::DalcGs;
    if (name == "dalc-nohints") return Method::DalcNoHints;
    throw ConfigError("unknown method \"" + name +
                      "\" (expected single, sc, dalc-id, dalc-svd, dalc-gs or dalc-nohints)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::Single: return "single";
        case Method::SelfConsistency: return "sc";
        case Method::DalcId: return "dalc-id";
        case Method::DalcSvd: return "dalc-svd";
        case Method::DalcGs: return "dalc-gs";
        case Method::DalcNoHints: return "dalc-nohints";
    }
    throw ConfigError("unknown method enumerator");
}

void apply_method(Method method, ProtocolConfig& protocol) {
    protocol.hints_enabled = true;
    switch (method) {
        case Method::Single:
        case Method::SelfConsistency:
            break;
        case Method::DalcId:
            protocol.projection.variant = ProjectionVariant::Identity;
            break;
        case Method::DalcSvd:
            protocol.projection.variant = ProjectionVariant::SvdReshape;
            break;
        case Method::DalcGs:
            protocol.projection.variant = ProjectionVariant::GramSchmidt;
            break;
        case Method::DalcNoHints:
            protocol.projection.variant = ProjectionVariant::GramSchmidt;
            protocol.hints_enabled = false;
            break;
    }
}

}  // namespace dalc
