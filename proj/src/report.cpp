#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dalc/harness.hpp"

namespace dalc {

using nlohmann::json;

namespace {

struct LoadedLog {
    std::filesystem::path path;
    json meta;
    std::vector<RecordStats> stats;
    RunSummary summary;
};

std::string fixed(double value, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    return buf;
}

std::string signed_fixed(double value, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.*f", precision, value);
    return buf;
}

std::string pct(const std::optional<double>& value) {
    return value ? fixed(*value * 100.0, 1) + "%" : "-";
}

std::string opt_num(const std::optional<double>& value, int precision) {
    return value ? fixed(*value, precision) : "-";
}

void render_table(std::ostringstream& out, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size());
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    }
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size())
                out << std::string(widths[c] - row[c].size() + 2, ' ');
        }
        out << "\n";
    }
}

// Column labels: the method name, numbered when several logs share it.
std::vector<std::string> column_labels(const std::vector<LoadedLog>& logs) {
    std::map<std::string, int> counts;
    for (const auto& log : logs) ++counts[log.summary.method];
    std::map<std::string, int> seen;
    std::vector<std::string> labels;
    for (const auto& log : logs) {
        std::string label = log.summary.method;
        if (counts[label] > 1) label += "#" + std::to_string(++seen[log.summary.method]);
        labels.push_back(std::move(label));
    }
    return labels;
}

struct LevelCell {
    int correct = 0;
    int attempted = 0;
};

std::map<int, LevelCell> per_level_cells(const LoadedLog& log) {
    std::map<int, LevelCell> cells;
    for (const RecordStats& stats : log.stats) {
        if (stats.failed || !stats.level) continue;
        LevelCell& cell = cells[*stats.level];
        ++cell.attempted;
        cell.correct += stats.correct ? 1 : 0;
    }
    return cells;
}

bool levels_everywhere(const std::vector<LoadedLog>& logs) {
    for (const auto& log : logs) {
        if (log.stats.empty()) return false;
        for (const RecordStats& stats : log.stats)
            if (!stats.level) return false;
    }
    return true;
}

std::string csv_report(const std::vector<LoadedLog>& logs, bool with_levels) {
    std::ostringstream out;
    out << "method,total,failed,accuracy,mean_tokens,raw_cos,raw_rank,proj_cos,proj_rank\n";
    auto cell = [](const std::optional<double>& v, int precision) {
        return v ? fixed(*v, precision) : std::string();
    };
    for (const auto& log : logs) {
        const RunSummary& s = log.summary;
        out << s.method << "," << s.total << "," << s.failed << ","
            << cell(s.accuracy, 4) << "," << cell(s.mean_tokens, 1) << ","
            << cell(s.mean_raw_cosine, 6) << "," << cell(s.mean_raw_rank, 6) << ","
            << cell(s.mean_proj_cosine, 6) << "," << cell(s.mean_proj_rank, 6) << "\n";
    }
    if (with_levels) {
        out << "\nlevel,method,correct,attempted,accuracy\n";
        const auto labels = column_labels(logs);
        for (std::size_t i = 0; i < logs.size(); ++i) {
            for (const auto& [level, c] : per_level_cells(logs[i])) {
                out << level << "," << labels[i] << "," << c.correct << "," << c.attempted
                    << ",";
                if (c.attempted > 0)
                    out << fixed(static_cast<double>(c.correct) / c.attempted, 4);
                out << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace

std::string emit_report(const std::vector<std::filesystem::path>& logs, ReportFormat format) {
    if (logs.empty()) throw ConfigError("no logs to report on");

    std::vector<LoadedLog> loaded;
    for (const auto& path : logs) {
        ParsedLog parsed = read_log(path);
        LoadedLog log;
        log.path = path;
        log.meta = std::move(parsed.meta);
        log.stats.reserve(parsed.records.size());
        for (const json& record : parsed.records) log.stats.push_back(stats_from_record(record));
        log.summary = summarize(log.meta.value("method", std::string("?")), log.stats);
        loaded.push_back(std::move(log));
    }
    for (std::size_t i = 1; i < loaded.size(); ++i) {
        if (loaded[i].meta.value("dataset_ids_hash", "") !=
            loaded[0].meta.value("dataset_ids_hash", ""))
            throw ConfigError("logs cover different datasets: " + loaded[0].path.string() +
                              " vs " + loaded[i].path.string());
    }

    const bool with_levels = levels_everywhere(loaded);
    if (format == ReportFormat::Csv) return csv_report(loaded, with_levels);

    std::ostringstream out;
    out << "== method summary ==\n";
    for (const auto& log : loaded) out << format_summary(log.summary) << "\n";

    if (with_levels) {
        out << "\n== per-level accuracy ==\n";
        const auto labels = column_labels(loaded);
        std::set<int> levels;
        for (const auto& log : loaded)
            for (const auto& [level, cell] : per_level_cells(log)) levels.insert(level);

        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"level"};
        header.insert(header.end(), labels.begin(), labels.end());
        rows.push_back(std::move(header));
        std::vector<std::map<int, LevelCell>> cells;
        for (const auto& log : loaded) cells.push_back(per_level_cells(log));
        for (int level : levels) {
            std::vector<std::string> row{std::to_string(level)};
            for (const auto& log_cells : cells) {
                auto it = log_cells.find(level);
                if (it == log_cells.end() || it->second.attempted == 0) {
                    row.push_back("-");
                } else {
                    const LevelCell& c = it->second;
                    row.push_back(fixed(100.0 * c.correct / c.attempted, 1) + "% (" +
                                  std::to_string(c.correct) + "/" +
                                  std::to_string(c.attempted) + ")");
                }
            }
            rows.push_back(std::move(row));
        }
        render_table(out, rows);
    }

    if (loaded.size() == 2 && loaded[0].summary.method == loaded[1].summary.method) {
        const RunSummary& a = loaded[0].summary;
        const RunSummary& b = loaded[1].summary;
        out << "\n== run delta (" << a.method << ") ==\n";
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"metric", "run1", "run2", "delta"});
        auto push = [&](const std::string& name, const std::optional<double>& x,
                        const std::optional<double>& y, double scale, int precision,
                        const std::string& suffix) {
            if (!x || !y) return;
            rows.push_back({name, fixed(*x * scale, precision) + suffix,
                            fixed(*y * scale, precision) + suffix,
                            signed_fixed((*y - *x) * scale, precision) + suffix});
        };
        push("accuracy", a.accuracy, b.accuracy, 100.0, 1, "%");
        push("tokens", a.mean_tokens, b.mean_tokens, 1.0, 1, "");
        push("raw_cos", a.mean_raw_cosine, b.mean_raw_cosine, 1.0, 3, "");
        push("raw_rank", a.mean_raw_rank, b.mean_raw_rank, 1.0, 2, "");
        push("proj_cos", a.mean_proj_cosine, b.mean_proj_cosine, 1.0, 3, "");
        push("proj_rank", a.mean_proj_rank, b.mean_proj_rank, 1.0, 2, "");
        render_table(out, rows);
    }

    std::set<std::string> encoders;
    for (const auto& log : loaded) encoders.insert(log.meta.value("encoder", ""));
    if (encoders.size() > 1) {
        out << "\n== encoder comparison ==\n";
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"encoder", "method", "acc", "raw_cos", "raw_rank"});
        for (const auto& log : loaded)
            rows.push_back({log.meta.value("encoder", "?"), log.summary.method,
                            pct(log.summary.accuracy),
                            opt_num(log.summary.mean_raw_cosine, 3),
                            opt_num(log.summary.mean_raw_rank, 2)});
        render_table(out, rows);
    }

    return out.str();
}

}  // namespace dalc
