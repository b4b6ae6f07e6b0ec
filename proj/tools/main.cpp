// Command-line front end: benchmark runs, single questions, trace
// audits, re-scoring, and run comparison.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "mavqa/mavqa.hpp"

namespace {

using namespace mavqa;

void force_backend_kind(RunConfig& config, BackendKind kind) {
    for (auto& [id, b] : config.backends) {
        if (b.kind == BackendKind::Remote || b.kind == BackendKind::Replay ||
            b.kind == BackendKind::Record) {
            b.kind = kind;
        }
    }
}

struct RunFlags {
    std::string config_path;
    std::string output_dir;
    std::string dataset;
    std::string frames_root;
    std::string mode;
    std::string aggregator;
    int workers = 0;
    int tool_budget = 0;
    int max_exchanges = 0;
    bool replay = false;
    bool record = false;
    bool concurrent_report = false;
    bool generic_captions = false;
};

RunConfig resolve_config(const RunFlags& flags) {
    RunConfig config = load_run_config(flags.config_path);
    if (!flags.output_dir.empty()) config.output_dir = flags.output_dir;
    if (!flags.dataset.empty()) config.dataset_path = flags.dataset;
    if (!flags.frames_root.empty()) config.frames_root = flags.frames_root;
    if (!flags.mode.empty()) config.mode = run_mode_from_string(flags.mode);
    if (!flags.aggregator.empty()) config.aggregator = aggregate_from_string(flags.aggregator);
    if (flags.workers > 0) config.workers = flags.workers;
    if (flags.tool_budget > 0) config.tool_budget = flags.tool_budget;
    if (flags.max_exchanges > 0) config.max_exchanges = flags.max_exchanges;
    if (flags.concurrent_report) config.concurrent_report = true;
    if (flags.generic_captions) config.guided_captions = false;
    if (flags.replay && flags.record) throw ConfigError("--replay and --record are exclusive");
    if (flags.replay) force_backend_kind(config, BackendKind::Replay);
    if (flags.record) force_backend_kind(config, BackendKind::Record);
    return config;
}

int cmd_run(const RunFlags& flags) {
    const RunConfig config = resolve_config(flags);
    const RunResult result = run_benchmark(config);
    std::cout << to_json(result.aggregate).dump(2) << "\n";
    std::cout << "outputs written to " << config.output_dir << "\n";
    return 0;
}

int cmd_ask(const RunFlags& flags, const std::string& question_id) {
    RunConfig config = resolve_config(flags);
    if (config.output_dir.empty()) {
        config.output_dir = (std::filesystem::temp_directory_path() / "mavqa_ask").string();
    }
    const auto questions = load_dataset(config.dataset_path);
    const QuestionRecord* q = nullptr;
    for (const auto& record : questions) {
        if (record.id == question_id) q = &record;
    }
    if (q == nullptr) {
        std::cerr << "question id not found in dataset: " << question_id << "\n";
        return 2;
    }
    BenchContext ctx = make_bench_context(config);
    const RunTrace trace = execute_question(config, ctx, *q, run_config_digest(config));
    json out{{"question_id", q->id},
             {"final", trace.verdict.final},
             {"final_letter", option_letter(trace.verdict.final)},
             {"option_text", q->options[static_cast<std::size_t>(trace.verdict.final)]},
             {"policy_id", trace.verdict.policy_id},
             {"justification", trace.verdict.justification}};
    if (q->gold) out["correct"] = trace.verdict.final == *q->gold;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_audit(const std::vector<std::string>& trace_files) {
    bool any_violation = false;
    for (const auto& path : trace_files) {
        const RunTrace trace = read_trace_file(path);
        const auto violations = audit_trace(trace);
        if (violations.empty()) {
            std::cout << path << ": ok (" << trace.events.size() << " events, topology "
                      << to_string(trace.topology) << ")\n";
            continue;
        }
        any_violation = true;
        std::cout << path << ": " << violations.size() << " violation(s)\n";
        for (const auto& v : violations) {
            std::cout << "  [" << v.rule_id << "] event " << v.event_seq << ": " << v.description
                      << "\n";
        }
    }
    return any_violation ? 1 : 0;
}

int cmd_score(const std::string& questions_file) {
    const auto outcomes = load_outcomes(questions_file);
    const Aggregate agg = score(outcomes);
    std::cout << to_json(agg).dump(2) << "\n";
    return 0;
}

int cmd_diff(const std::string& a_path, const std::string& b_path) {
    auto locate = [](const std::string& path) {
        namespace fs = std::filesystem;
        if (fs::is_directory(path)) return (fs::path(path) / "questions.jsonl").string();
        return path;
    };
    const auto a = load_outcomes(locate(a_path));
    const auto b = load_outcomes(locate(b_path));
    std::cout << render_diff(compare_runs(a, b));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent video question answering engine"};
    app.require_subcommand(1);

    RunFlags flags;
    std::string question_id;
    std::vector<std::string> trace_files;
    std::string questions_file;
    std::string diff_a, diff_b;

    auto add_run_flags = [&flags](CLI::App* cmd, bool config_required) {
        auto* opt = cmd->add_option("--config", flags.config_path, "run config JSON file");
        if (config_required) opt->required();
        cmd->add_option("--output", flags.output_dir, "output directory (overrides config)");
        cmd->add_option("--dataset", flags.dataset, "dataset file (overrides config)");
        cmd->add_option("--frames-root", flags.frames_root, "frame root dir (overrides config)");
        cmd->add_option("--mode", flags.mode,
                        "single_text|single_video|single_graph|report|star|debate|report_star");
        cmd->add_option("--aggregator", flags.aggregator, "model|majority|best_category");
        cmd->add_option("--workers", flags.workers, "concurrent question workers");
        cmd->add_option("--tool-budget", flags.tool_budget, "per-agent tool call budget");
        cmd->add_option("--max-exchanges", flags.max_exchanges, "star exchange cap");
        cmd->add_flag("--replay", flags.replay, "force all cassette-capable backends to replay");
        cmd->add_flag("--record", flags.record, "force all cassette-capable backends to record");
        cmd->add_flag("--concurrent-report", flags.concurrent_report,
                      "fan out report-phase agents concurrently");
        cmd->add_flag("--generic-captions", flags.generic_captions,
                      "use generic caption prompts instead of question-guided ones");
    };

    auto* run = app.add_subcommand("run", "execute a benchmark run with caching and resume");
    add_run_flags(run, true);

    auto* ask = app.add_subcommand("ask", "answer a single question from the dataset");
    add_run_flags(ask, true);
    ask->add_option("--id", question_id, "question id")->required();

    auto* audit = app.add_subcommand("audit", "check trace files against topology rules");
    audit->add_option("traces", trace_files, "trace files (jsonl)")->required();

    auto* score_cmd = app.add_subcommand("score", "re-score a per-question outcomes file");
    score_cmd->add_option("questions", questions_file, "questions.jsonl from a run")->required();

    auto* diff = app.add_subcommand("diff", "compare two runs over the same question set");
    diff->add_option("a", diff_a, "first run dir or questions.jsonl")->required();
    diff->add_option("b", diff_b, "second run dir or questions.jsonl")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(flags);
        if (ask->parsed()) return cmd_ask(flags, question_id);
        if (audit->parsed()) return cmd_audit(trace_files);
        if (score_cmd->parsed()) return cmd_score(questions_file);
        if (diff->parsed()) return cmd_diff(diff_a, diff_b);
    } catch (const mavqa::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
