#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "mavqa/backends.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/http.hpp"
#include "mavqa/topology.hpp"

namespace mavqa {

// ── run configuration ───────────────────────────────────────────

enum class RunMode { SingleText, SingleVideo, SingleGraph, Report, Star, Debate, ReportStar };

inline std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::SingleText: return "single_text";
        case RunMode::SingleVideo: return "single_video";
        case RunMode::SingleGraph: return "single_graph";
        case RunMode::Report: return "report";
        case RunMode::Star: return "star";
        case RunMode::Debate: return "debate";
        case RunMode::ReportStar: return "report_star";
    }
    return "report";
}

inline RunMode run_mode_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "single_text") return RunMode::SingleText;
    if (u == "single_video") return RunMode::SingleVideo;
    if (u == "single_graph") return RunMode::SingleGraph;
    if (u == "report") return RunMode::Report;
    if (u == "star") return RunMode::Star;
    if (u == "debate") return RunMode::Debate;
    if (u == "report_star" || u == "reportstar") return RunMode::ReportStar;
    throw ConfigError("unknown run mode: " + std::string(s));
}

inline OrganizerConfig::Aggregate aggregate_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "model") return OrganizerConfig::Aggregate::Model;
    if (u == "majority") return OrganizerConfig::Aggregate::Majority;
    if (u == "best_category") return OrganizerConfig::Aggregate::BestCategory;
    throw ConfigError("unknown aggregator: " + std::string(s));
}

inline std::string to_string(OrganizerConfig::Aggregate a) {
    switch (a) {
        case OrganizerConfig::Aggregate::Model: return "model";
        case OrganizerConfig::Aggregate::Majority: return "majority";
        case OrganizerConfig::Aggregate::BestCategory: return "best_category";
    }
    return "model";
}

struct RunConfig {
    RunMode mode = RunMode::Report;
    OrganizerConfig::Aggregate aggregator = OrganizerConfig::Aggregate::Model;
    std::string dataset_path;
    std::string frames_root;
    std::string output_dir;
    std::map<std::string, BackendConfig> backends;
    std::string agent_backend;      // used by all three agents
    std::string organizer_backend;  // model-aggregate runs
    std::string captioner_backend;
    std::string grapher_backend;
    std::string video_backend;      // serves the video_query tool
    int tool_budget = 5;
    int max_exchanges = 8;
    int tool_result_limit = 8000;
    bool guided_captions = true;
    CaptionPlanOptions plan;
    double chunk_threshold = 0.3;
    ModalityRanking ranking = default_ranking();
    std::optional<CategoryTable> category_table;
    std::vector<ModalityKind> debate_order = {ModalityKind::Text, ModalityKind::Video,
                                              ModalityKind::Graph};
    int workers = 1;
    unsigned seed = 0;
    bool concurrent_report = false;
};

inline json to_json(const RunConfig& c) {
    json backends = json::object();
    for (const auto& [id, b] : c.backends) {
        backends[id] = json{{"kind", to_string(b.kind)},       {"endpoint", b.endpoint},
                            {"model_id", b.model_id},          {"cassette", b.cassette},
                            {"api_key_env", b.api_key_env},    {"mock_reply", b.mock_reply},
                            {"retries", b.retries}};
    }
    json ranking = json::array();
    for (ModalityKind m : c.ranking) ranking.push_back(to_string(m));
    json order = json::array();
    for (ModalityKind m : c.debate_order) order.push_back(to_string(m));
    json out{{"mode", to_string(c.mode)},
             {"aggregator", to_string(c.aggregator)},
             {"dataset", c.dataset_path},
             {"frames_root", c.frames_root},
             {"output_dir", c.output_dir},
             {"backends", std::move(backends)},
             {"agent_backend", c.agent_backend},
             {"organizer_backend", c.organizer_backend},
             {"captioner_backend", c.captioner_backend},
             {"grapher_backend", c.grapher_backend},
             {"video_backend", c.video_backend},
             {"tool_budget", c.tool_budget},
             {"max_exchanges", c.max_exchanges},
             {"tool_result_limit", c.tool_result_limit},
             {"guided_captions", c.guided_captions},
             {"window_size", c.plan.window_size},
             {"overlap", c.plan.overlap},
             {"fps", c.plan.fps},
             {"chunk_threshold", c.chunk_threshold},
             {"ranking", std::move(ranking)},
             {"debate_order", std::move(order)},
             {"workers", c.workers},
             {"seed", c.seed},
             {"concurrent_report", c.concurrent_report}};
    if (c.category_table) {
        json table = json::object();
        for (const auto& [cat, m] : *c.category_table) table[to_string(cat)] = to_string(m);
        out["category_table"] = std::move(table);
    }
    return out;
}

// Everything except the output directory identifies the run.
inline std::string run_config_digest(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    return sha256_hex(dump_stable(j));
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("mode")) c.mode = run_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("aggregator")) {
        c.aggregator = aggregate_from_string(j["aggregator"].get<std::string>());
    }
    c.dataset_path = j.value("dataset", std::string());
    c.frames_root = j.value("frames_root", std::string());
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("backends")) {
        for (const auto& [id, jb] : j["backends"].items()) {
            BackendConfig b;
            b.backend_id = id;
            b.kind = backend_kind_from_string(jb.value("kind", std::string("mock")));
            b.endpoint = jb.value("endpoint", std::string());
            b.model_id = jb.value("model_id", std::string());
            b.cassette = jb.value("cassette", std::string());
            b.api_key_env = jb.value("api_key_env", std::string("MAVQA_API_KEY"));
            b.mock_reply = jb.value("mock_reply", std::string("A"));
            b.retries = jb.value("retries", 3);
            c.backends.emplace(id, std::move(b));
        }
    }
    c.agent_backend = j.value("agent_backend", std::string());
    c.organizer_backend = j.value("organizer_backend", std::string());
    c.captioner_backend = j.value("captioner_backend", std::string());
    c.grapher_backend = j.value("grapher_backend", std::string());
    c.video_backend = j.value("video_backend", std::string());
    c.tool_budget = j.value("tool_budget", 5);
    c.max_exchanges = j.value("max_exchanges", 8);
    c.tool_result_limit = j.value("tool_result_limit", 8000);
    c.guided_captions = j.value("guided_captions", true);
    c.plan.window_size = j.value("window_size", 5);
    c.plan.overlap = j.value("overlap", 1);
    c.plan.fps = j.value("fps", 1);
    c.chunk_threshold = j.value("chunk_threshold", 0.3);
    if (j.contains("ranking")) {
        const auto& r = j["ranking"];
        if (!r.is_array() || r.size() != 3) throw ConfigError("ranking must list 3 modalities");
        for (std::size_t i = 0; i < 3; ++i) {
            c.ranking[i] = modality_from_string(r[i].get<std::string>());
        }
    }
    if (j.contains("category_table")) {
        CategoryTable table;
        for (const auto& [cat, m] : j["category_table"].items()) {
            table[category_from_string(cat)] = modality_from_string(m.get<std::string>());
        }
        c.category_table = std::move(table);
    }
    if (j.contains("debate_order")) {
        c.debate_order.clear();
        for (const auto& m : j["debate_order"]) {
            c.debate_order.push_back(modality_from_string(m.get<std::string>()));
        }
    }
    c.workers = j.value("workers", 1);
    c.seed = j.value("seed", 0u);
    c.concurrent_report = j.value("concurrent_report", false);
    return c;
}

// Loads a config file; relative paths resolve against the file's parent
// directory.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read run config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("run config is not valid JSON: " + std::string(e.what()));
    }
    RunConfig c = run_config_from_json(j);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&base](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) {
            p = (base / p).lexically_normal().string();
        }
    };
    resolve(c.dataset_path);
    resolve(c.frames_root);
    resolve(c.output_dir);
    for (auto& [id, b] : c.backends) resolve(b.cassette);
    return c;
}

// ── dataset loading ─────────────────────────────────────────────

namespace detail {

inline int parse_answer_field(const json& v, std::size_t record_index,
                              std::size_t option_count) {
    int index = -1;
    if (v.is_number_integer()) {
        index = v.get<int>();
    } else if (v.is_string()) {
        const std::string s = strings::trim(v.get<std::string>());
        if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]))) {
            index = strings::lower(s[0]) - 'a';
        } else {
            try {
                index = std::stoi(s);
            } catch (...) {
                throw SchemaError(record_index, "answer", "not an index or option letter: " + s);
            }
        }
    } else {
        throw SchemaError(record_index, "answer", "must be an integer or option letter");
    }
    if (index < 0 || index >= static_cast<int>(option_count)) {
        throw SchemaError(record_index, "answer",
                          "index " + std::to_string(index) + " out of range");
    }
    return index;
}

}  // namespace detail

// Parses a JSON array of {id, video, question, options, answer?, category?}.
// Records without an answer load with gold absent (hidden test sets).
inline std::vector<QuestionRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read dataset: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("dataset is not valid JSON: " + std::string(e.what()));
    }
    if (!root.is_array()) throw ConfigError("dataset must be a JSON array of question records");

    std::vector<QuestionRecord> out;
    out.reserve(root.size());
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& r = root[i];
        if (!r.is_object()) throw SchemaError(i, "record", "not an object");
        QuestionRecord q;
        if (!r.contains("id")) throw SchemaError(i, "id", "missing");
        q.id = r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
        if (!r.contains("video") || !r["video"].is_string()) {
            throw SchemaError(i, "video", "missing or not a string");
        }
        q.video_id = r["video"].get<std::string>();
        if (!r.contains("question") || !r["question"].is_string()) {
            throw SchemaError(i, "question", "missing or not a string");
        }
        q.question = r["question"].get<std::string>();
        if (!r.contains("options") || !r["options"].is_array() || r["options"].size() < 2) {
            throw SchemaError(i, "options", "missing or fewer than 2 entries");
        }
        for (const auto& opt : r["options"]) {
            if (!opt.is_string()) throw SchemaError(i, "options", "entries must be strings");
            q.options.push_back(opt.get<std::string>());
        }
        if (r.contains("answer") && !r["answer"].is_null()) {
            q.gold = detail::parse_answer_field(r["answer"], i, q.options.size());
        }
        if (r.contains("category") && r["category"].is_string()) {
            q.category = category_from_string(r["category"].get<std::string>());
        }
        try {
            out.push_back(normalize_question(q));
        } catch (const DuplicateOptionsError& e) {
            throw SchemaError(i, "options", e.what());
        } catch (const EmptyQuestionError& e) {
            throw SchemaError(i, "question", e.what());
        } catch (const InvalidOptionError& e) {
            throw SchemaError(i, "answer", e.what());
        }
    }
    return out;
}

// ── outcomes & scoring ──────────────────────────────────────────

struct QuestionOutcome {
    std::string question_id;
    CategoryCode category = CategoryCode::Other;
    std::optional<int> gold;
    std::optional<int> chosen;  // absent == unanswered (errored)
    std::string policy_id;
    std::string trace_path;
    std::string error;

    std::optional<bool> correct() const {
        if (!gold || !chosen) return std::nullopt;
        return *chosen == *gold;
    }
};

inline json to_json(const QuestionOutcome& o) {
    json j{{"question_id", o.question_id},
           {"category", to_string(o.category)},
           {"policy_id", o.policy_id},
           {"trace_path", o.trace_path}};
    j["gold"] = o.gold ? json(*o.gold) : json(nullptr);
    j["chosen"] = o.chosen ? json(*o.chosen) : json(nullptr);
    j["correct"] = o.correct() ? json(*o.correct()) : json(nullptr);
    if (!o.error.empty()) j["error"] = o.error;
    return j;
}

inline QuestionOutcome outcome_from_json(const json& j) {
    QuestionOutcome o;
    o.question_id = j.at("question_id").get<std::string>();
    o.category = category_from_string(j.value("category", std::string("OTHER")));
    if (j.contains("gold") && !j["gold"].is_null()) o.gold = j["gold"].get<int>();
    if (j.contains("chosen") && !j["chosen"].is_null()) o.chosen = j["chosen"].get<int>();
    o.policy_id = j.value("policy_id", std::string());
    o.trace_path = j.value("trace_path", std::string());
    o.error = j.value("error", std::string());
    return o;
}

struct CategoryScore {
    int correct = 0;
    int total = 0;

    double accuracy_percent() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / total;
    }
};

struct Aggregate {
    std::optional<double> overall_accuracy;  // percent, full precision
    std::map<CategoryCode, CategoryScore> per_category;
    int total = 0;
    int answered = 0;
    int errors = 0;
    int correct = 0;
};

// Display rounding to 1 decimal; internal values keep full precision.
inline double round1(double v) {
    return std::round(v * 10.0) / 10.0;
}

// Accuracy per category plus overall, over answered outcomes. Every
// answered outcome must carry a gold label; categories with zero
// questions are omitted.
inline Aggregate score(const std::vector<QuestionOutcome>& outcomes) {
    if (outcomes.empty()) throw EmptyRunError("no outcomes to score");
    Aggregate agg;
    agg.total = static_cast<int>(outcomes.size());
    for (const auto& o : outcomes) {
        if (!o.chosen) {
            ++agg.errors;
            continue;
        }
        if (!o.gold) {
            throw MissingGoldError("outcome " + o.question_id + " has no gold answer");
        }
        ++agg.answered;
        auto& cat = agg.per_category[o.category];
        ++cat.total;
        if (*o.chosen == *o.gold) {
            ++cat.correct;
            ++agg.correct;
        }
    }
    if (agg.answered == 0) throw EmptyRunError("no answered outcomes to score");
    agg.overall_accuracy = 100.0 * static_cast<double>(agg.correct) / agg.answered;
    return agg;
}

inline json to_json(const Aggregate& agg) {
    json per_category = json::object();
    for (const auto& [cat, s] : agg.per_category) {
        per_category[to_string(cat)] = json{{"accuracy", round1(s.accuracy_percent())},
                                            {"correct", s.correct},
                                            {"total", s.total}};
    }
    json j{{"per_category", std::move(per_category)},
           {"counts",
            {{"total", agg.total},
             {"answered", agg.answered},
             {"errors", agg.errors},
             {"correct", agg.correct}}}};
    j["overall_accuracy"] = agg.overall_accuracy ? json(round1(*agg.overall_accuracy))
                                                 : json(nullptr);
    return j;
}

struct RunResult {
    std::vector<QuestionOutcome> outcomes;  // dataset order
    Aggregate aggregate;
};

// ── benchmark runner ────────────────────────────────────────────

// Shared run machinery: the backend registry plus the caption and graph
// stores for one output directory.
struct BenchContext {
    BackendRegistry registry;
    std::shared_ptr<CaptionStore> captions;
    std::shared_ptr<SceneGraphStore> graphs;
};

inline BenchContext make_bench_context(const RunConfig& config) {
    BenchContext ctx;
    for (const auto& [id, b] : config.backends) ctx.registry.add(id, make_backend(b));
    const std::filesystem::path stores_dir = std::filesystem::path(config.output_dir) / "stores";
    ctx.captions = std::make_shared<CaptionStore>((stores_dir / "captions.jsonl").string());
    ctx.graphs = std::make_shared<SceneGraphStore>((stores_dir / "graphs.jsonl").string());
    return ctx;
}

namespace detail {

// Lenient aggregate for benchmark reports: accuracy over outcomes that
// have both an answer and a gold label. score() stays strict.
inline Aggregate lenient_aggregate(const std::vector<QuestionOutcome>& outcomes) {
    Aggregate agg;
    agg.total = static_cast<int>(outcomes.size());
    int with_gold = 0;
    for (const auto& o : outcomes) {
        if (!o.chosen) {
            ++agg.errors;
            continue;
        }
        ++agg.answered;
        if (!o.gold) continue;
        ++with_gold;
        auto& cat = agg.per_category[o.category];
        ++cat.total;
        if (*o.chosen == *o.gold) {
            ++cat.correct;
            ++agg.correct;
        }
    }
    if (with_gold > 0) {
        agg.overall_accuracy = 100.0 * static_cast<double>(agg.correct) / with_gold;
    }
    return agg;
}

inline ModelBackend* backend_or_null(const BackendRegistry& registry, const std::string& id) {
    if (id.empty() || !registry.has(id)) return nullptr;
    return &registry.get(id);
}

inline ToolEnv make_tool_env(const RunConfig& config, const BenchContext& ctx,
                             const QuestionRecord& q) {
    ToolEnv env;
    env.video_id = q.video_id;
    env.question_id = q.id;
    if (!config.frames_root.empty()) {
        env.frames_dir = (std::filesystem::path(config.frames_root) / q.video_id).string();
    }
    env.captions = ctx.captions.get();
    env.graphs = ctx.graphs.get();
    env.captioner = backend_or_null(ctx.registry, config.captioner_backend);
    env.grapher = backend_or_null(ctx.registry, config.grapher_backend);
    env.video_backend = backend_or_null(ctx.registry, config.video_backend);
    env.guided = config.guided_captions;
    env.plan = config.plan;
    env.chunk_threshold = config.chunk_threshold;
    return env;
}

inline std::vector<AgentConfig> make_agents(const RunConfig& config) {
    std::vector<AgentConfig> agents;
    for (ModalityKind m : kAllModalities) {
        agents.push_back(AgentConfig{m, config.tool_budget, config.agent_backend, "",
                                     config.tool_result_limit});
    }
    return agents;
}

inline OrganizerConfig make_organizer(const RunConfig& config) {
    OrganizerConfig org;
    org.backend_id = config.organizer_backend;
    org.aggregate = config.aggregator;
    org.ranking = config.ranking;
    if (config.category_table) org.table = *config.category_table;
    return org;
}

}  // namespace detail

// Runs one question under the configured mode and returns its trace.
inline RunTrace execute_question(const RunConfig& config, const BenchContext& ctx,
                                 const QuestionRecord& q, const std::string& config_digest) {
    const ToolEnv env = detail::make_tool_env(config, ctx, q);
    RunOptions options;
    options.max_exchanges = config.max_exchanges;
    options.concurrent_report = config.concurrent_report;
    options.question_id = q.id;
    options.config_digest = config_digest;

    switch (config.mode) {
        case RunMode::SingleText:
        case RunMode::SingleVideo:
        case RunMode::SingleGraph: {
            ModalityKind m = config.mode == RunMode::SingleText    ? ModalityKind::Text
                             : config.mode == RunMode::SingleVideo ? ModalityKind::Video
                                                                   : ModalityKind::Graph;
            AgentConfig agent{m, config.tool_budget, config.agent_backend, "",
                              config.tool_result_limit};
            return run_single(q, agent, ctx.registry, env, options);
        }
        case RunMode::Report:
            return run_report(q, detail::make_agents(config), detail::make_organizer(config),
                              ctx.registry, env, options);
        case RunMode::Star:
            return run_star(q, detail::make_agents(config), detail::make_organizer(config),
                            ctx.registry, env, options);
        case RunMode::Debate:
            return run_debate(q, detail::make_agents(config), config.debate_order,
                              detail::make_organizer(config), ctx.registry, env, options);
        case RunMode::ReportStar:
            return run_report_star(q, detail::make_agents(config), detail::make_organizer(config),
                                   ctx.registry, env, options);
    }
    throw ConfigError("unhandled run mode");
}

// Executes the configured mode per question with per-question traces and
// an append-only resume ledger; completed question ids are skipped on
// re-runs. Failed questions are recorded and excluded from the accuracy
// denominator.
inline RunResult run_benchmark(const RunConfig& config, BenchContext& ctx) {
    namespace fs = std::filesystem;
    if (config.dataset_path.empty() || !fs::exists(config.dataset_path)) {
        throw ConfigError("dataset path missing or nonexistent: " + config.dataset_path);
    }
    if (!config.frames_root.empty() && !fs::exists(config.frames_root)) {
        throw ConfigError("frames_root does not exist: " + config.frames_root);
    }
    if (config.output_dir.empty()) throw ConfigError("output_dir is required");
    fs::create_directories(config.output_dir);
    fs::create_directories(fs::path(config.output_dir) / "traces");

    const std::vector<QuestionRecord> questions = load_dataset(config.dataset_path);
    const std::string config_digest = run_config_digest(config);

    // Resume ledger: one outcome record per completed question.
    const fs::path ledger_path = fs::path(config.output_dir) / "ledger.jsonl";
    std::map<std::string, QuestionOutcome> completed;
    {
        std::ifstream in(ledger_path);
        std::string line;
        while (in && std::getline(in, line)) {
            if (strings::trim(line).empty()) continue;
            QuestionOutcome o = outcome_from_json(json::parse(line));
            completed.emplace(o.question_id, std::move(o));
        }
    }

    std::mutex ledger_mutex;
    std::ofstream ledger(ledger_path, std::ios::app);
    if (!ledger) throw Error("cannot open ledger: " + ledger_path.string());

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        if (!completed.count(questions[i].id)) pending.push_back(i);
    }

    auto process = [&](std::size_t index) {
        const QuestionRecord& q = questions[index];
        QuestionOutcome outcome;
        outcome.question_id = q.id;
        outcome.category = q.category;
        outcome.gold = q.gold;
        const std::string rel_trace = "traces/" + q.id + ".jsonl";
        try {
            RunTrace trace = execute_question(config, ctx, q, config_digest);
            write_trace_file((fs::path(config.output_dir) / rel_trace).string(), trace);
            outcome.chosen = trace.verdict.final;
            outcome.policy_id = trace.verdict.policy_id;
            outcome.trace_path = rel_trace;
        } catch (const Error& e) {
            outcome.error = e.what();
        }
        std::lock_guard lock(ledger_mutex);
        ledger << dump_stable(to_json(outcome)) << "\n";
        ledger.flush();
        completed.emplace(outcome.question_id, std::move(outcome));
    };

    const int workers = std::max(1, config.workers);
    if (workers == 1 || pending.size() <= 1) {
        for (std::size_t index : pending) process(index);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const int n = std::min<std::size_t>(workers, pending.size());
        pool.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= pending.size()) return;
                    process(pending[k]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    RunResult result;
    result.outcomes.reserve(questions.size());
    for (const auto& q : questions) {
        auto it = completed.find(q.id);
        if (it != completed.end()) result.outcomes.push_back(it->second);
    }
    result.aggregate = detail::lenient_aggregate(result.outcomes);

    // Aggregate + per-question files, stable field order.
    {
        std::ofstream out(fs::path(config.output_dir) / "results.json", std::ios::trunc);
        out << to_json(result.aggregate).dump(2, ' ', false, json::error_handler_t::replace)
            << "\n";
    }
    {
        std::ofstream out(fs::path(config.output_dir) / "questions.jsonl", std::ios::trunc);
        for (const auto& o : result.outcomes) out << dump_stable(to_json(o)) << "\n";
    }
    return result;
}

inline RunResult run_benchmark(const RunConfig& config) {
    if (config.output_dir.empty()) throw ConfigError("output_dir is required");
    BenchContext ctx = make_bench_context(config);
    return run_benchmark(config, ctx);
}

inline std::vector<QuestionOutcome> load_outcomes(const std::string& questions_jsonl) {
    std::ifstream in(questions_jsonl);
    if (!in) throw ConfigError("cannot read outcomes file: " + questions_jsonl);
    std::vector<QuestionOutcome> out;
    std::string line;
    while (std::getline(in, line)) {
        if (strings::trim(line).empty()) continue;
        out.push_back(outcome_from_json(json::parse(line)));
    }
    return out;
}

// ── run comparison ──────────────────────────────────────────────

struct RunDiff {
    struct Flip {
        std::string question_id;
        int a_chosen = 0;
        int b_chosen = 0;
        std::optional<int> gold;
    };

    std::vector<Flip> flips;
    std::optional<double> overall_delta;  // percentage points, b - a
    std::map<CategoryCode, double> category_delta;
    // McNemar contingency over questions answered in both runs with gold.
    int both_right = 0;
    int both_wrong = 0;
    int a_only = 0;  // a right, b wrong
    int b_only = 0;
};

// Flipped answers, per-category accuracy deltas, and McNemar counts.
// Requires identical question-id sets.
inline RunDiff compare_runs(const std::vector<QuestionOutcome>& a,
                            const std::vector<QuestionOutcome>& b) {
    std::map<std::string, const QuestionOutcome*> bmap;
    for (const auto& o : b) bmap[o.question_id] = &o;
    if (a.size() != b.size() || bmap.size() != b.size()) {
        throw QuestionSetMismatchError("runs cover different question sets");
    }
    for (const auto& o : a) {
        if (!bmap.count(o.question_id)) {
            throw QuestionSetMismatchError("question " + o.question_id + " missing from run b");
        }
    }

    RunDiff diff;
    std::map<CategoryCode, CategoryScore> cat_a, cat_b;
    int gold_a_correct = 0, gold_b_correct = 0, gold_n = 0;
    for (const auto& oa : a) {
        const QuestionOutcome& ob = *bmap.at(oa.question_id);
        if (oa.chosen && ob.chosen && *oa.chosen != *ob.chosen) {
            diff.flips.push_back({oa.question_id, *oa.chosen, *ob.chosen, oa.gold});
        }
        if (oa.chosen && ob.chosen && oa.gold) {
            const bool ra = *oa.chosen == *oa.gold;
            const bool rb = *ob.chosen == *oa.gold;
            ++gold_n;
            if (ra) ++gold_a_correct;
            if (rb) ++gold_b_correct;
            auto& ca = cat_a[oa.category];
            auto& cb = cat_b[oa.category];
            ++ca.total;
            ++cb.total;
            if (ra) ++ca.correct;
            if (rb) ++cb.correct;
            if (ra && rb) {
                ++diff.both_right;
            } else if (!ra && !rb) {
                ++diff.both_wrong;
            } else if (ra) {
                ++diff.a_only;
            } else {
                ++diff.b_only;
            }
        }
    }
    if (gold_n > 0) {
        diff.overall_delta = 100.0 * (gold_b_correct - gold_a_correct) / static_cast<double>(gold_n);
        for (const auto& [cat, sa] : cat_a) {
            diff.category_delta[cat] = cat_b[cat].accuracy_percent() - sa.accuracy_percent();
        }
    }
    return diff;
}

inline std::string render_diff(const RunDiff& diff) {
    std::string out;
    out += "flips: " + std::to_string(diff.flips.size()) + "\n";
    for (const auto& f : diff.flips) {
        out += "  " + f.question_id + ": " + option_letter(f.a_chosen) + " -> " +
               option_letter(f.b_chosen);
        if (f.gold) out += " (gold " + option_letter(*f.gold) + ")";
        out += "\n";
    }
    if (diff.overall_delta) {
        out += "overall delta: " + strings::format_number(round1(*diff.overall_delta)) +
               " points\n";
        for (const auto& [cat, d] : diff.category_delta) {
            out += "  " + to_string(cat) + ": " + strings::format_number(round1(d)) + "\n";
        }
    }
    out += "mcnemar: both_right=" + std::to_string(diff.both_right) +
           " both_wrong=" + std::to_string(diff.both_wrong) +
           " a_only=" + std::to_string(diff.a_only) + " b_only=" + std::to_string(diff.b_only) +
           "\n";
    return out;
}

}  // namespace mavqa
