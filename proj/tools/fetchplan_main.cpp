// Command-line front end: an interactive chat REPL, the batch experiment
// runner, and a report renderer over recorded results.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fetchplan/fetchplan.hpp"

namespace {

using namespace fetchplan;

class ConsoleUser : public dialog::UserAgent {
public:
    std::string answer(const dialog::Inquiry& inquiry) override {
        std::cout << "\n[robot] " << inquiry.question << "\n";
        if (!inquiry.options.empty())
            std::cout << "        options: " << join(inquiry.options) << "\n";
        std::cout << "  you> " << std::flush;
        std::string line;
        if (!std::getline(std::cin, line)) return "unknown";
        return line;
    }
};

struct ChatOptions {
    std::string ontology = "data/ontology.json";
    std::string world = "data/world.json";
    std::string templates;
    std::string script = "data/backend_script.json";
    std::string endpoint;
    std::string approach = "okb_llm_mem";
    std::string situation = "with_defaults";
    double detect_prob = 1.0;
    std::uint64_t seed = 0;
    bool trace = false;
};

int run_chat(const ChatOptions& opt) {
    kb::OntologyStore store = kb::load_ontology_file(opt.ontology);
    simworld::WorldState world = simworld::load_world_file(opt.world);

    verify::VerificationConfig vconfig;
    if (!opt.templates.empty())
        vconfig.templates = prompts::InquiryTemplates::load_file(opt.templates);
    std::string system_prompt = prompts::build_system_prompt(store, vconfig.schema);

    std::optional<std::string> endpoint;
    if (!opt.endpoint.empty()) endpoint = opt.endpoint;
    if (const char* env = std::getenv(llm::kBackendEndpointEnv); env && *env) endpoint = env;
    std::shared_ptr<const llm::Script> script;
    if (!endpoint)
        script = std::make_shared<const llm::Script>(
            opt.script.empty() ? llm::Script{} : llm::load_script_file(opt.script));

    resolve::ApproachConfig approach = bench::approach_config(opt.approach, opt.situation);
    ConsoleUser user;

    std::cout << "Fetch-task planner. Commands look like: Find an apple. / Take a mug. / "
                 "Bring a sugar_box.\n";
    std::cout << "Approach: " << approach.approach_name() << ", " << approach.situation_name()
              << (endpoint ? ", live backend " + *endpoint : ", scripted backend") << "\n";
    std::cout << "Furniture: " << join(world.furniture) << "\n";
    std::cout << "Type 'quit' to exit.\n";

    std::uint64_t episode_index = 0;
    std::string line;
    while (true) {
        std::cout << "\ncommand> " << std::flush;
        if (!std::getline(std::cin, line)) break;
        if (line.empty()) continue;
        if (line == "quit" || line == "exit") break;

        std::unique_ptr<llm::Backend> backend;
        if (endpoint)
            backend = std::make_unique<llm::HttpBackend>(*endpoint);
        else
            backend = std::make_unique<llm::ScriptedBackend>(script);
        llm::BackendSession session(*backend, system_prompt, llm::GenerationParams{},
                                    approach.use_memory);
        simworld::PerceptionModel perception(opt.detect_prob, opt.seed + episode_index);
        EpisodeLog log;

        resolve::EpisodeResult result = resolve::run_episode(
            world, store, session, user, approach, line, perception, log, vconfig);
        ++episode_index;

        if (result.success) {
            std::cout << "\n[robot] Done.";
            if (result.found_at) std::cout << " Found " << result.object << " at " << *result.found_at << ".";
        } else {
            std::cout << "\n[robot] I could not complete that: " << result.failure_reason;
        }
        std::printf("\n  time %.1fs, visits %d, user inquiries %d, model calls %d\n",
                    result.completion_time_s, result.visits, result.inquiries, result.llm_calls);
        if (opt.trace) {
            std::cout << "--- episode trace ---\n";
            log.write_jsonl(std::cout);
            std::cout << "---------------------\n";
        }
    }
    std::cout << "\n";
    return 0;
}

struct RunCliOptions {
    std::string spec_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int parallelism = 1;
    std::string format = "markdown";
    bool no_logs = false;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

int run_batch(const RunCliOptions& opt) {
    bench::ExperimentSpec spec = bench::load_experiment_spec_file(opt.spec_path);
    bench::ReportFormat format = bench::report_format_from_string(opt.format);

    bench::RunOptions options;
    options.seed = opt.seed;
    options.parallelism = opt.parallelism;
    std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir);
    if (!opt.no_logs) options.log_dir = out_dir / "logs";

    std::vector<bench::MetricsRecord> records = bench::run_experiment(spec, options);

    write_file(out_dir / "records.csv", bench::emit_csv(records));
    std::filesystem::path report_path =
        out_dir / (format == bench::ReportFormat::markdown ? "report.md" : "report.csv");
    write_file(report_path, bench::emit_report(records, format));

    std::size_t successes = 0;
    for (const auto& r : records)
        if (r.success) ++successes;
    std::printf("%zu episodes, %zu successful (%.1f%%)\n", records.size(), successes,
                records.empty() ? 0.0 : 100.0 * static_cast<double>(successes) /
                                            static_cast<double>(records.size()));
    std::printf("records: %s\nreport:  %s\n", (out_dir / "records.csv").c_str(),
                report_path.c_str());
    return 0;
}

struct ReportCliOptions {
    std::string records_path;
    std::string format = "markdown";
    std::string out_path;
};

int run_report(const ReportCliOptions& opt) {
    std::ifstream in(opt.records_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + opt.records_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<bench::MetricsRecord> records = bench::parse_records_csv(text);
    std::string doc = bench::emit_report(records, bench::report_format_from_string(opt.format));
    if (opt.out_path.empty())
        std::cout << doc;
    else
        write_file(opt.out_path, doc);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-grounded fetch-task planner"};
    app.require_subcommand(1);

    ChatOptions chat;
    CLI::App* chat_cmd = app.add_subcommand("chat", "Interactive fetch-task REPL");
    chat_cmd->add_option("--ontology", chat.ontology, "Ontology fixture path");
    chat_cmd->add_option("--world", chat.world, "World fixture path");
    chat_cmd->add_option("--templates", chat.templates, "Inquiry template file (builtin if omitted)");
    chat_cmd->add_option("--script", chat.script, "Scripted backend reply file");
    chat_cmd->add_option("--endpoint", chat.endpoint, "Live backend endpoint URL");
    chat_cmd->add_option("--approach", chat.approach, "okb, okb_llm, or okb_llm_mem");
    chat_cmd->add_option("--situation", chat.situation, "with_defaults or without_defaults");
    chat_cmd->add_option("--detect-prob", chat.detect_prob, "Perception detection probability");
    chat_cmd->add_option("--seed", chat.seed, "Perception RNG seed");
    chat_cmd->add_flag("--trace", chat.trace, "Print the episode log after each command");

    RunCliOptions run;
    std::uint64_t run_seed = 0;
    CLI::App* run_cmd = app.add_subcommand("run", "Execute an experiment file");
    run_cmd->add_option("--spec", run.spec_path, "Experiment file")->required();
    run_cmd->add_option("--out", run.out_dir, "Output directory");
    CLI::Option* seed_opt = run_cmd->add_option("--seed", run_seed, "Override the experiment seed");
    run_cmd->add_option("--parallelism", run.parallelism, "Worker thread count");
    run_cmd->add_option("--format", run.format, "Report format: markdown or csv");
    run_cmd->add_flag("--no-logs", run.no_logs, "Skip writing per-episode logs");

    ReportCliOptions report;
    CLI::App* report_cmd = app.add_subcommand("report", "Render a records CSV");
    report_cmd->add_option("--records", report.records_path, "Records CSV path")->required();
    report_cmd->add_option("--format", report.format, "markdown or csv");
    report_cmd->add_option("--out", report.out_path, "Output file (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (chat_cmd->parsed()) return run_chat(chat);
        if (run_cmd->parsed()) {
            if (seed_opt->count() > 0) run.seed = run_seed;
            return run_batch(run);
        }
        if (report_cmd->parsed()) return run_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
