#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fetchplan/episode_log.hpp"
#include "fetchplan/http_backend.hpp"
#include "fetchplan/kb.hpp"
#include "fetchplan/llm.hpp"
#include "fetchplan/names.hpp"
#include "fetchplan/prompts.hpp"
#include "fetchplan/resolve.hpp"
#include "fetchplan/simworld.hpp"
#include "fetchplan/stats.hpp"
#include "fetchplan/verify.hpp"

namespace fetchplan::bench {

class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& known_approaches() {
    static const std::vector<std::string> names = {"okb", "okb_llm", "okb_llm_mem"};
    return names;
}

inline const std::vector<std::string>& known_situations() {
    static const std::vector<std::string> names = {"with_defaults", "without_defaults"};
    return names;
}

inline resolve::ApproachConfig approach_config(const std::string& approach,
                                               const std::string& situation) {
    bool defaults;
    if (situation == "with_defaults")
        defaults = true;
    else if (situation == "without_defaults")
        defaults = false;
    else
        throw SpecError("unknown situation '" + situation + "'");

    if (approach == "okb") return resolve::ApproachConfig::okb(defaults);
    if (approach == "okb_llm") return resolve::ApproachConfig::okb_llm(defaults);
    if (approach == "okb_llm_mem") return resolve::ApproachConfig::okb_llm_mem(defaults);
    throw SpecError("unknown approach '" + approach + "'");
}

/// Description of one experimental grid: fixtures, axes, protocol knobs,
/// and the backend to use.
struct ExperimentSpec {
    std::filesystem::path ontology_path;
    std::filesystem::path world_path;
    std::optional<std::filesystem::path> templates_path;
    std::optional<std::filesystem::path> script_path;
    std::optional<std::string> endpoint;

    std::vector<std::string> approaches;
    std::vector<std::string> situations;
    std::vector<std::string> commands;
    int repetitions = 1;
    std::uint64_t seed = 0;
    double detect_prob = 1.0;
    double synthetic_latency_s = 0.0;
    llm::GenerationParams params;
    std::map<EntityName, EntityName> preferences;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::filesystem::path& base,
                                          const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

} // namespace detail

/// Parse an experiment description. Relative fixture paths are resolved
/// against `base_dir` (normally the directory containing the spec file).
inline ExperimentSpec load_experiment_spec(const nlohmann::json& doc,
                                           const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw SpecError("experiment spec must be a JSON object");

    ExperimentSpec spec;
    try {
        spec.ontology_path = detail::resolve_path(base_dir, doc.at("ontology").get<std::string>());
        spec.world_path = detail::resolve_path(base_dir, doc.at("world").get<std::string>());
        if (doc.contains("templates"))
            spec.templates_path =
                detail::resolve_path(base_dir, doc.at("templates").get<std::string>());

        if (doc.contains("backend")) {
            const auto& backend = doc.at("backend");
            if (!backend.is_object()) throw SpecError("'backend' must be an object");
            if (backend.contains("script") == backend.contains("endpoint"))
                throw SpecError("'backend' needs exactly one of 'script' or 'endpoint'");
            if (backend.contains("script"))
                spec.script_path =
                    detail::resolve_path(base_dir, backend.at("script").get<std::string>());
            else
                spec.endpoint = backend.at("endpoint").get<std::string>();
        }

        spec.approaches = doc.contains("approaches")
                              ? doc.at("approaches").get<std::vector<std::string>>()
                              : known_approaches();
        spec.situations = doc.contains("situations")
                              ? doc.at("situations").get<std::vector<std::string>>()
                              : known_situations();
        spec.commands = doc.at("commands").get<std::vector<std::string>>();
        spec.repetitions = doc.value("repetitions", 1);
        spec.seed = doc.value("seed", std::uint64_t{0});
        spec.detect_prob = doc.value("detect_prob", 1.0);
        spec.synthetic_latency_s = doc.value("synthetic_latency_s", 0.0);

        if (doc.contains("params")) {
            const auto& p = doc.at("params");
            spec.params.max_seq_len = p.value("max_seq_len", spec.params.max_seq_len);
            spec.params.max_gen_len = p.value("max_gen_len", spec.params.max_gen_len);
            spec.params.temperature = p.value("temperature", spec.params.temperature);
            spec.params.top_p = p.value("top_p", spec.params.top_p);
        }
        if (doc.contains("preferences"))
            for (const auto& [term, choice] : doc.at("preferences").items())
                spec.preferences[term] = choice.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("malformed experiment spec: ") + e.what());
    }

    if (spec.repetitions < 1) throw SpecError("repetitions must be >= 1");
    if (spec.commands.empty()) throw SpecError("commands must be non-empty");
    if (spec.approaches.empty()) throw SpecError("approaches must be non-empty");
    if (spec.situations.empty()) throw SpecError("situations must be non-empty");
    if (spec.detect_prob < 0.0 || spec.detect_prob > 1.0)
        throw SpecError("detect_prob must be within [0, 1]");
    for (const auto& a : spec.approaches)
        if (!contains(known_approaches(), a)) throw SpecError("unknown approach '" + a + "'");
    for (const auto& s : spec.situations)
        if (!contains(known_situations(), s)) throw SpecError("unknown situation '" + s + "'");
    return spec;
}

inline ExperimentSpec load_experiment_spec_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open experiment spec: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SpecError("cannot parse experiment spec " + path.string() + ": " + e.what());
    }
    return load_experiment_spec(doc, path.parent_path());
}

/// One episode's metrics, one row of the records CSV.
struct MetricsRecord {
    std::string approach;
    std::string situation;
    std::string command;
    int rep = 0;
    bool success = false;
    double time_s = 0.0;
    int inquiries = 0;
    int visits = 0;
    int llm_calls = 0;
    double llm_time_s = 0.0;
    long long tokens = 0;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    int parallelism = 1;
    std::optional<std::filesystem::path> log_dir;
};

/// Run the full grid. One record per (approach, situation, command,
/// repetition), in that nesting order. Deterministic for a fixed seed and
/// scripted backend: every episode derives its RNG from (seed, episode
/// index) alone, so parallelism cannot change the results.
inline std::vector<MetricsRecord> run_experiment(const ExperimentSpec& spec,
                                                 const RunOptions& options = {}) {
    if (spec.repetitions < 1) throw SpecError("repetitions must be >= 1");
    if (spec.commands.empty()) throw SpecError("commands must be non-empty");
    if (spec.approaches.empty() || spec.situations.empty())
        throw SpecError("approaches and situations must be non-empty");

    const kb::OntologyStore store = kb::load_ontology_file(spec.ontology_path);
    const simworld::WorldState world = simworld::load_world_file(spec.world_path);

    verify::VerificationConfig vconfig;
    if (spec.templates_path)
        vconfig.templates = prompts::InquiryTemplates::load_file(*spec.templates_path);
    const std::string system_prompt = prompts::build_system_prompt(store, vconfig.schema);

    std::optional<std::string> endpoint = spec.endpoint;
    if (const char* env = std::getenv(llm::kBackendEndpointEnv); env && *env) endpoint = env;
    std::shared_ptr<const llm::Script> script;
    if (!endpoint)
        script = std::make_shared<const llm::Script>(
            spec.script_path ? llm::load_script_file(*spec.script_path) : llm::Script{});

    const std::uint64_t seed = options.seed.value_or(spec.seed);
    const std::size_t reps = static_cast<std::size_t>(spec.repetitions);
    const std::size_t n_commands = spec.commands.size();
    const std::size_t n_situations = spec.situations.size();
    const std::size_t total = spec.approaches.size() * n_situations * n_commands * reps;
    std::vector<MetricsRecord> records(total);

    if (options.log_dir) std::filesystem::create_directories(*options.log_dir);

    auto run_one = [&](std::size_t index) {
        std::size_t rest = index;
        const std::size_t rep = rest % reps;
        rest /= reps;
        const std::size_t ci = rest % n_commands;
        rest /= n_commands;
        const std::size_t si = rest % n_situations;
        const std::size_t ai = rest / n_situations;

        MetricsRecord rec;
        rec.approach = spec.approaches[ai];
        rec.situation = spec.situations[si];
        rec.command = spec.commands[ci];
        rec.rep = static_cast<int>(rep);

        EpisodeLog log;
        try {
            resolve::ApproachConfig approach = approach_config(rec.approach, rec.situation);
            std::seed_seq seq{static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(index),
                              static_cast<std::uint32_t>(index >> 32)};
            std::mt19937_64 rng(seq);
            simworld::PerceptionModel perception(spec.detect_prob, rng());

            std::unique_ptr<llm::Backend> backend;
            if (endpoint)
                backend = std::make_unique<llm::HttpBackend>(*endpoint);
            else
                backend = std::make_unique<llm::ScriptedBackend>(script, spec.synthetic_latency_s);

            llm::BackendSession session(*backend, system_prompt, spec.params,
                                        approach.use_memory);
            simworld::SimulatedUser user(world, spec.preferences);
            resolve::EpisodeResult episode = resolve::run_episode(
                world, store, session, user, approach, rec.command, perception, log, vconfig);

            rec.success = episode.success;
            rec.time_s = episode.completion_time_s;
            rec.inquiries = episode.inquiries;
            rec.visits = episode.visits;
            rec.llm_calls = episode.llm_calls;
            rec.llm_time_s = episode.llm_time_s;
            rec.tokens = episode.generated_tokens;
        } catch (const std::exception& e) {
            // an anomalous episode becomes a failed record, never a dead grid
            log.event("episode_error", {{"what", e.what()}});
        }
        records[index] = std::move(rec);

        if (options.log_dir) {
            char name[32];
            std::snprintf(name, sizeof name, "episode_%05zu.jsonl", index);
            std::ofstream out(*options.log_dir / name);
            if (out)
                log.write_jsonl(out);
            else
                std::fprintf(stderr, "warning: cannot write episode log %s\n", name);
        }
    };

    const int workers = std::max(1, options.parallelism);
    if (workers == 1 || total <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), total);
        pool.reserve(count);
        for (std::size_t t = 0; t < count; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1))
                    run_one(i);
            });
        for (auto& th : pool) th.join();
    }
    return records;
}

enum class Metric { success_rate, time_s, inquiries, visits, llm_calls, llm_time_s, tokens };

inline const std::vector<Metric>& all_metrics() {
    static const std::vector<Metric> metrics = {
        Metric::success_rate, Metric::time_s,     Metric::inquiries, Metric::visits,
        Metric::llm_calls,    Metric::llm_time_s, Metric::tokens};
    return metrics;
}

inline const char* metric_title(Metric metric) {
    switch (metric) {
        case Metric::success_rate: return "Success rate";
        case Metric::time_s: return "Completion time (s)";
        case Metric::inquiries: return "User inquiries";
        case Metric::visits: return "Furniture visits";
        case Metric::llm_calls: return "Model calls";
        case Metric::llm_time_s: return "Model latency (s)";
        case Metric::tokens: return "Generated tokens";
    }
    return "?";
}

inline double metric_value(const MetricsRecord& r, Metric metric) {
    switch (metric) {
        case Metric::success_rate: return r.success ? 1.0 : 0.0;
        case Metric::time_s: return r.time_s;
        case Metric::inquiries: return static_cast<double>(r.inquiries);
        case Metric::visits: return static_cast<double>(r.visits);
        case Metric::llm_calls: return static_cast<double>(r.llm_calls);
        case Metric::llm_time_s: return r.llm_time_s;
        case Metric::tokens: return static_cast<double>(r.tokens);
    }
    return 0.0;
}

struct SummaryCell {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

/// (approach, situation)
using CellKey = std::pair<std::string, std::string>;

inline std::map<CellKey, SummaryCell> summarize(const std::vector<MetricsRecord>& records,
                                                Metric metric) {
    std::map<CellKey, std::vector<double>> values;
    for (const auto& r : records)
        values[{r.approach, r.situation}].push_back(metric_value(r, metric));
    std::map<CellKey, SummaryCell> out;
    for (const auto& [key, xs] : values)
        out[key] = SummaryCell{stats::mean(xs), stats::sample_sd(xs), xs.size()};
    return out;
}

/// Two-sided Mann-Whitney U p-value between two grid cells. nullopt when
/// either cell has fewer than two records.
inline std::optional<double> significance(const std::vector<MetricsRecord>& records,
                                          const CellKey& cell_a, const CellKey& cell_b,
                                          Metric metric) {
    std::vector<double> a, b;
    for (const auto& r : records) {
        CellKey key{r.approach, r.situation};
        if (key == cell_a) a.push_back(metric_value(r, metric));
        if (key == cell_b) b.push_back(metric_value(r, metric));
    }
    return stats::mann_whitney_p(a, b);
}

inline std::string significance_stars(const std::optional<double>& p) {
    if (!p) return "";
    if (*p < 0.01) return "**";
    if (*p < 0.05) return "*";
    return "";
}

enum class ReportFormat { csv, markdown };

inline ReportFormat report_format_from_string(const std::string& name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "markdown" || name == "md") return ReportFormat::markdown;
    throw UsageError("unknown report format '" + name + "' (expected csv or markdown)");
}

inline constexpr const char* kCsvHeader =
    "approach,situation,command,rep,success,time_s,inquiries,visits,llm_calls,llm_time_s,tokens";

namespace detail {

inline std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) return value;
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::vector<std::string> distinct_in_order(const std::vector<MetricsRecord>& records,
                                                  std::string MetricsRecord::* field) {
    std::vector<std::string> out;
    for (const auto& r : records)
        if (!contains(out, r.*field)) out.push_back(r.*field);
    return out;
}

inline std::string verb_of_command(const std::string& command) {
    try {
        return resolve::to_string(resolve::parse_command(command).verb);
    } catch (const std::exception&) {
        return "other";
    }
}

} // namespace detail

inline std::string emit_csv(const std::vector<MetricsRecord>& records) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const auto& r : records) {
        out += detail::csv_field(r.approach);
        out += ',';
        out += detail::csv_field(r.situation);
        out += ',';
        out += detail::csv_field(r.command);
        out += ',';
        out += std::to_string(r.rep);
        out += ',';
        out += r.success ? '1' : '0';
        out += ',';
        out += detail::fixed3(r.time_s);
        out += ',';
        out += std::to_string(r.inquiries);
        out += ',';
        out += std::to_string(r.visits);
        out += ',';
        out += std::to_string(r.llm_calls);
        out += ',';
        out += detail::fixed3(r.llm_time_s);
        out += ',';
        out += std::to_string(r.tokens);
        out += '\n';
    }
    return out;
}

inline std::string emit_markdown(const std::vector<MetricsRecord>& records) {
    const std::vector<std::string> approaches =
        detail::distinct_in_order(records, &MetricsRecord::approach);
    const std::vector<std::string> situations =
        detail::distinct_in_order(records, &MetricsRecord::situation);
    const std::vector<std::string> commands =
        detail::distinct_in_order(records, &MetricsRecord::command);
    int max_rep = 0;
    for (const auto& r : records) max_rep = std::max(max_rep, r.rep);

    std::string out = "# Fetch-task benchmark report\n\n";
    out += "Records: " + std::to_string(records.size()) + " (" +
           std::to_string(approaches.size()) + " approaches x " +
           std::to_string(situations.size()) + " situations x " +
           std::to_string(commands.size()) + " commands x " + std::to_string(max_rep + 1) +
           " repetitions).\n";

    for (Metric metric : all_metrics()) {
        auto cells = summarize(records, metric);
        out += "\n## ";
        out += metric_title(metric);
        out += "\n\n| situation | statistic |";
        for (const auto& a : approaches) out += " " + a + " |";
        out += "\n|---|---|";
        for (std::size_t i = 0; i < approaches.size(); ++i) out += "---|";
        out += "\n";

        for (const auto& situation : situations) {
            out += "| " + situation + " | mean |";
            for (const auto& approach : approaches) {
                auto it = cells.find({approach, situation});
                out += it == cells.end() ? " - |" : " " + detail::fixed3(it->second.mean) + " |";
            }
            out += "\n| " + situation + " | sd |";
            for (const auto& approach : approaches) {
                auto it = cells.find({approach, situation});
                out += it == cells.end() ? " - |" : " " + detail::fixed3(it->second.sd) + " |";
            }
            out += "\n";
        }

        if (approaches.size() > 1) {
            const std::string& baseline = approaches.front();
            for (const auto& situation : situations) {
                out += "\nSignificance vs " + baseline + " (" + situation + "):";
                bool first = true;
                for (std::size_t i = 1; i < approaches.size(); ++i) {
                    auto p = significance(records, {approaches[i], situation},
                                          {baseline, situation}, metric);
                    out += first ? " " : "; ";
                    first = false;
                    out += approaches[i] + " p=";
                    if (p) {
                        out += detail::fixed3(*p);
                        std::string stars = significance_stars(p);
                        if (!stars.empty()) out += " " + stars;
                    } else {
                        out += "n/a";
                    }
                }
                out += "\n";
            }
        }
    }

    // completion time by verb, successful episodes only
    std::vector<std::string> verbs;
    std::map<std::pair<std::string, std::string>, std::vector<double>> verb_times;
    for (const auto& r : records) {
        if (!r.success) continue;
        std::string verb = detail::verb_of_command(r.command);
        if (!contains(verbs, verb)) verbs.push_back(verb);
        verb_times[{verb, r.approach}].push_back(r.time_s);
    }
    if (!verbs.empty()) {
        out += "\n## Completion time by verb (successful episodes only)\n\n| verb |";
        for (const auto& a : approaches) out += " " + a + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < approaches.size(); ++i) out += "---|";
        out += "\n";
        for (const auto& verb : verbs) {
            out += "| " + verb + " |";
            for (const auto& approach : approaches) {
                auto it = verb_times.find({verb, approach});
                if (it == verb_times.end()) {
                    out += " - |";
                } else {
                    out += " " + detail::fixed3(stats::mean(it->second)) + " (n=" +
                           std::to_string(it->second.size()) + ") |";
                }
            }
            out += "\n";
        }
    }

    out += "\n## Notes\n\n";
    out += "- Mean and sd are per-episode statistics; sd uses the sample convention (n-1). "
           "Success rate is the fraction of successful episodes.\n";
    out += "- Significance uses a two-sided Mann-Whitney U test against the first approach "
           "column; * p < 0.05, ** p < 0.01; n/a where a cell has fewer than two records.\n";
    out += "- Completion time is simulated robot motion plus backend latency. The scripted "
           "backend reports zero latency unless a synthetic latency is configured, which keeps "
           "scripted runs deterministic.\n";
    out += "- Verb rows average successful episodes only, pooled across situations.\n";
    return out;
}

inline std::string emit_report(const std::vector<MetricsRecord>& records, ReportFormat format) {
    if (records.empty()) throw UsageError("no records to report");
    switch (format) {
        case ReportFormat::csv: return emit_csv(records);
        case ReportFormat::markdown: return emit_markdown(records);
    }
    throw UsageError("unknown report format");
}

/// Parse a records CSV back into memory (round-trip of emit_csv).
inline std::vector<MetricsRecord> parse_records_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        row_has_data = true;
    };
    auto end_row = [&] {
        if (row_has_data || !row.empty()) {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
            row_has_data = false;
        }
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
            row_has_data = true;
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (!field.empty() || row_has_data || !row.empty()) end_row();

    if (rows.empty()) throw UsageError("records CSV is empty");
    const std::vector<std::string> header = {"approach",  "situation", "command",   "rep",
                                             "success",   "time_s",    "inquiries", "visits",
                                             "llm_calls", "llm_time_s", "tokens"};
    if (rows.front() != header) throw UsageError("records CSV has an unexpected header");

    std::vector<MetricsRecord> records;
    records.reserve(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != header.size())
            throw UsageError("records CSV row " + std::to_string(i + 1) + " has " +
                             std::to_string(r.size()) + " fields, expected " +
                             std::to_string(header.size()));
        try {
            MetricsRecord rec;
            rec.approach = r[0];
            rec.situation = r[1];
            rec.command = r[2];
            rec.rep = std::stoi(r[3]);
            rec.success = r[4] == "1";
            rec.time_s = std::stod(r[5]);
            rec.inquiries = std::stoi(r[6]);
            rec.visits = std::stoi(r[7]);
            rec.llm_calls = std::stoi(r[8]);
            rec.llm_time_s = std::stod(r[9]);
            rec.tokens = std::stoll(r[10]);
            records.push_back(std::move(rec));
        } catch (const std::exception&) {
            throw UsageError("records CSV row " + std::to_string(i + 1) +
                             " has a malformed numeric field");
        }
    }
    return records;
}

} // namespace fetchplan::bench
