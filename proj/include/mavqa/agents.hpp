#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mavqa/backends.hpp"
#include "mavqa/captioning.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/scenegraph.hpp"

namespace mavqa {

// ── configuration ───────────────────────────────────────────────

struct AgentConfig {
    ModalityKind modality = ModalityKind::Text;
    int tool_budget = 5;
    std::string backend_id;
    std::string system_prompt;        // empty -> default for the modality
    int tool_result_limit = 8000;     // chars; longer results are truncated
};

struct ToolCall {
    std::string tool_name;
    json arguments;
};

struct FinalAnswer {
    int chosen = -1;
    std::string rationale;
    std::vector<EvidenceItem> evidence;
};

// Exactly one of tool / final is populated.
struct ModelTurn {
    std::optional<ToolCall> tool;
    std::optional<FinalAnswer> final;
};

// ── final-answer parsing ────────────────────────────────────────

namespace detail {

// First balanced {...} block that parses as JSON, scanning string
// literals correctly.
inline std::optional<json> extract_json_object(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    json parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!parsed.is_discarded()) return parsed;
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

// Accepts a 0-based index or an option letter ("D", "d").
inline std::optional<int> option_index_from_json(const json& v) {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_string()) {
        const std::string s = strings::trim(v.get<std::string>());
        if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]))) {
            return strings::lower(s[0]) - 'a';
        }
        try {
            std::size_t pos = 0;
            const int n = std::stoi(s, &pos);
            if (pos == s.size()) return n;
        } catch (...) {
        }
    }
    return std::nullopt;
}

inline std::optional<EvidenceKind> evidence_kind_from_string(const std::string& s) {
    const std::string u = strings::to_lower(s);
    if (u == "caption" || u == "captionref") return EvidenceKind::CaptionRef;
    if (u == "triplet") return EvidenceKind::Triplet;
    if (u == "video" || u == "videoobservation") return EvidenceKind::VideoObservation;
    return std::nullopt;
}

inline std::vector<EvidenceItem> parse_evidence(const json& arr) {
    std::vector<EvidenceItem> items;
    if (!arr.is_array()) return items;
    for (const auto& e : arr) {
        if (!e.is_object()) continue;
        EvidenceItem item;
        if (auto kind = evidence_kind_from_string(e.value("kind", std::string("caption")))) {
            item.kind = *kind;
        }
        item.content = e.value("content", std::string());
        if (e.contains("time_span") && e["time_span"].is_array() && e["time_span"].size() == 2) {
            TimeSpan span{e["time_span"][0].get<double>(), e["time_span"][1].get<double>()};
            if (span.valid()) item.time_span = span;
        }
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace detail

// Structured final answer: a JSON object with an "answer" field, or a
// recognizable "Answer: D" pattern as a fallback for loose backends.
inline FinalAnswer parse_final_answer(const std::string& text, int option_count) {
    FinalAnswer out;
    bool parsed = false;
    if (auto j = detail::extract_json_object(text); j && j->contains("answer")) {
        if (auto idx = detail::option_index_from_json((*j)["answer"])) {
            out.chosen = *idx;
            out.rationale = j->value("rationale", j->value("justification", std::string()));
            if (j->contains("evidence")) out.evidence = detail::parse_evidence((*j)["evidence"]);
            parsed = true;
        }
    }
    if (!parsed) {
        static const std::regex lone(R"(^\s*\(?([A-Ea-e])[\).:,]?\s*$)");
        static const std::regex leading(R"(^\s*\(?([A-Ea-e])[\).:,]\s+)");
        static const std::regex phrased(
            R"((?:final answer|answer|option)\s*(?:is|:)?\s*\(?([A-Ea-e0-9]+)\b)",
            std::regex::icase);
        std::smatch m;
        if (std::regex_match(text, m, lone) || std::regex_search(text, m, leading)) {
            out.chosen = strings::lower(m[1].str()[0]) - 'a';
            out.rationale = strings::trim(text);
            parsed = true;
        } else if (std::regex_search(text, m, phrased)) {
            const std::string token = m[1].str();
            if (token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) {
                out.chosen = strings::lower(token[0]) - 'a';
            } else {
                try {
                    out.chosen = std::stoi(token);
                } catch (...) {
                    throw MalformedModelOutputError("unparseable answer token: " + token);
                }
            }
            out.rationale = strings::trim(text);
            parsed = true;
        }
    }
    if (!parsed) {
        throw MalformedModelOutputError("no final answer found in model output: " +
                                        text.substr(0, 200));
    }
    if (out.chosen < 0 || out.chosen >= option_count) {
        throw InvalidOptionError("final answer index " + std::to_string(out.chosen) +
                                 " out of range [0, " + std::to_string(option_count) + ")");
    }
    return out;
}

inline ModelTurn turn_from_wire(const ModelTurnWire& wire, int option_count) {
    ModelTurn turn;
    if (wire.is_tool_call()) {
        json args = json::parse(wire.tool_call->arguments_json, nullptr, false);
        if (args.is_discarded()) {
            throw MalformedModelOutputError("tool call '" + wire.tool_call->name +
                                            "' has unparseable arguments");
        }
        turn.tool = ToolCall{wire.tool_call->name, std::move(args)};
        return turn;
    }
    turn.final = parse_final_answer(wire.text.value_or(""), option_count);
    return turn;
}

// ── tool environment ────────────────────────────────────────────

// Everything a tool may need for one question. Stores are shared and
// internally synchronized; backends may be null when a modality is
// unused in a given run.
struct ToolEnv {
    std::string video_id;
    std::string question_id;
    std::string frames_dir;
    CaptionStore* captions = nullptr;
    SceneGraphStore* graphs = nullptr;
    ModelBackend* captioner = nullptr;
    ModelBackend* grapher = nullptr;
    ModelBackend* video_backend = nullptr;
    bool guided = true;
    CaptionPlanOptions plan;
    double chunk_threshold = 0.3;
};

inline std::string caption_cache_id(const ToolEnv& env) {
    return env.guided ? env.question_id : std::string(kGenericCaptionKey);
}

// Captions for this question, generating them on first use.
inline std::vector<Caption> ensure_captions(const ToolEnv& env, const QuestionRecord& question) {
    auto generate = [&]() -> std::vector<Caption> {
        if (env.captioner == nullptr) {
            throw NoCaptionsError("no captions cached for video '" + env.video_id +
                                  "' and no captioner backend configured");
        }
        try {
            return caption_video(env.frames_dir, question, *env.captioner, env.guided, env.plan);
        } catch (const NoCaptionsError&) {
            throw;
        } catch (const Error& e) {
            throw NoCaptionsError("caption generation failed for video '" + env.video_id +
                                  "': " + e.what());
        }
    };
    if (env.captions == nullptr) return generate();
    return env.captions->ensure(env.video_id, caption_cache_id(env), generate);
}

// Scene graphs for this video, built from the question's caption set on
// first use.
inline std::vector<SceneGraph> ensure_graphs(const ToolEnv& env, const QuestionRecord& question) {
    auto generate = [&]() -> std::vector<SceneGraph> {
        if (env.grapher == nullptr) {
            throw NoGraphsError("no graphs cached for video '" + env.video_id +
                                "' and no graph backend configured");
        }
        const auto captions = ensure_captions(env, question);
        try {
            return build_scene_graphs(captions, *env.grapher, env.chunk_threshold);
        } catch (const NoGraphsError&) {
            throw;
        } catch (const Error& e) {
            throw NoGraphsError("scene-graph generation failed for video '" + env.video_id +
                                "': " + e.what());
        }
    };
    if (env.graphs == nullptr) return generate();
    return env.graphs->ensure(env.video_id, generate);
}

// ── tools ───────────────────────────────────────────────────────

inline std::string format_caption_line(const Caption& c) {
    return "[" + strings::format_number(c.window.start_seconds()) + "s-" +
           strings::format_number(c.window.end_seconds()) + "s] " + c.text;
}

// Captions for the requested window range, or all of them.
inline std::string text_tool(const ToolEnv& env, const QuestionRecord& question,
                             std::optional<IndexRange> range = std::nullopt) {
    const auto captions = ensure_captions(env, question);
    std::size_t first = 0;
    std::size_t last = captions.empty() ? 0 : captions.size() - 1;
    if (range) {
        if (range->first > range->last || range->last >= captions.size()) {
            throw NoCaptionsError("window range [" + std::to_string(range->first) + "," +
                                  std::to_string(range->last) + "] out of bounds; valid windows" +
                                  " are [0," + std::to_string(captions.size() - 1) + "]");
        }
        first = range->first;
        last = range->last;
    }
    std::string out;
    for (std::size_t i = first; i <= last && i < captions.size(); ++i) {
        out += "window " + std::to_string(i) + " " + format_caption_line(captions[i]) + "\n";
    }
    return out.empty() ? "(no captions)" : out;
}

// Passes the query plus the whole media reference to the video backend.
inline std::string video_tool(const ToolEnv& env, const std::string& query) {
    if (strings::trim(query).empty()) throw EmptyQueryError("video tool query is empty");
    if (env.video_backend == nullptr) {
        throw BackendFailureError("no video backend configured", false);
    }
    ChatMessage msg;
    msg.role = Role::User;
    msg.content = query;
    for (auto& path : list_frames(env.frames_dir)) msg.media.push_back({std::move(path)});
    if (msg.media.empty()) {
        throw BackendFailureError("video source has no frames: " + env.frames_dir, false);
    }
    ChatRequest request;
    request.messages.push_back(std::move(msg));
    ModelTurnWire turn = env.video_backend->complete(request);
    if (!turn.is_text()) throw BackendFailureError("video backend returned a non-text turn", false);
    return *turn.text;
}

enum class GraphQueryKind { Range, Entity };

inline std::string serialize_triplet_with_span(const Triplet& t) {
    return serialize_triplet(t) + " [" + strings::format_number(t.span.start) + "s-" +
           strings::format_number(t.span.end) + "s]";
}

// Interval or entity lookups over the video's scene graphs.
inline std::string graph_tool(const ToolEnv& env, const QuestionRecord& question,
                              GraphQueryKind kind, double t0 = 0, double t1 = 0,
                              const std::string& label = "") {
    if (kind == GraphQueryKind::Range && t1 < t0) {
        throw InvalidSpanError("graph range query has t1 < t0");
    }
    const auto graphs = ensure_graphs(env, question);
    const std::vector<Triplet> hits = kind == GraphQueryKind::Range
                                          ? triplets_in_range(graphs, t0, t1)
                                          : triplets_with_entity(graphs, label);
    if (hits.empty()) return "(no triplets)";
    std::string out;
    for (const auto& t : hits) out += serialize_triplet_with_span(t) + "\n";
    return out;
}

// ── tool registry ───────────────────────────────────────────────

inline const std::vector<ToolSchema>& tool_schemas_for(ModalityKind modality) {
    static const std::vector<ToolSchema> text_tools = {
        {"get_captions",
         "Question-guided captions for the video, one per multi-frame window, with time spans."
         " Pass start/end window indices to narrow the range; omit both for all windows.",
         json{{"type", "object"},
              {"properties",
               {{"start", {{"type", "integer"}}}, {"end", {{"type", "integer"}}}}}}}};
    static const std::vector<ToolSchema> video_tools = {
        {"video_query",
         "Ask the vision model a free-form question about the raw video frames.",
         json{{"type", "object"},
              {"properties", {{"query", {{"type", "string"}}}}},
              {"required", {"query"}}}}};
    static const std::vector<ToolSchema> graph_tools = {
        {"graph_range",
         "Scene-graph triplets whose time span intersects [t0, t1] seconds.",
         json{{"type", "object"},
              {"properties", {{"t0", {{"type", "number"}}}, {"t1", {{"type", "number"}}}}},
              {"required", {"t0", "t1"}}}},
        {"graph_entity",
         "Scene-graph triplets whose subject or object matches the label (case-insensitive).",
         json{{"type", "object"},
              {"properties", {{"label", {{"type", "string"}}}}},
              {"required", {"label"}}}}};
    switch (modality) {
        case ModalityKind::Text: return text_tools;
        case ModalityKind::Video: return video_tools;
        case ModalityKind::Graph: return graph_tools;
    }
    return text_tools;
}

inline bool tool_registered(ModalityKind modality, const std::string& name) {
    for (const auto& schema : tool_schemas_for(modality)) {
        if (schema.name == name) return true;
    }
    return false;
}

// Dispatches a parsed tool call. Unregistered names throw UnknownToolError.
inline std::string run_tool(const ToolEnv& env, const QuestionRecord& question,
                            ModalityKind modality, const ToolCall& call) {
    if (!tool_registered(modality, call.tool_name)) {
        throw UnknownToolError("tool '" + call.tool_name + "' is not registered for modality " +
                               to_string(modality));
    }
    const json& args = call.arguments;
    if (call.tool_name == "get_captions") {
        std::optional<IndexRange> range;
        if (args.contains("start") || args.contains("end")) {
            const long long start = args.value("start", 0LL);
            const long long end = args.value("end", start);
            if (start < 0 || end < 0) {
                throw NoCaptionsError("window indices must be non-negative");
            }
            range = IndexRange{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
        }
        return text_tool(env, question, range);
    }
    if (call.tool_name == "video_query") {
        return video_tool(env, args.value("query", std::string()));
    }
    if (call.tool_name == "graph_range") {
        return graph_tool(env, question, GraphQueryKind::Range, args.value("t0", 0.0),
                          args.value("t1", 0.0));
    }
    if (call.tool_name == "graph_entity") {
        return graph_tool(env, question, GraphQueryKind::Entity, 0, 0,
                          args.value("label", std::string()));
    }
    throw UnknownToolError("tool '" + call.tool_name + "' has no dispatcher");
}

// ── prompts ─────────────────────────────────────────────────────

inline constexpr const char* kFinalAnswerInstruction =
    "When you are confident, reply with only a JSON object of the form"
    " {\"answer\": <0-based option index>, \"rationale\": \"<why>\","
    " \"evidence\": [{\"kind\": \"caption\"|\"triplet\"|\"video\","
    " \"time_span\": [start_seconds, end_seconds], \"content\": \"<supporting detail>\"}]}.";

inline std::string default_agent_system_prompt(ModalityKind modality) {
    std::string base;
    switch (modality) {
        case ModalityKind::Text:
            base = "You are the text analysis agent for video question answering. You reason over"
                   " time-stamped, question-guided captions fetched with the get_captions tool.";
            break;
        case ModalityKind::Video:
            base = "You are the video analysis agent for video question answering. You inspect the"
                   " raw visual content through the video_query tool.";
            break;
        case ModalityKind::Graph:
            base = "You are the graph analysis agent for video question answering. You reason over"
                   " time-stamped (subject, relation, object) triplets fetched with the"
                   " graph_range and graph_entity tools.";
            break;
    }
    return base + " Invoke your tool repeatedly with different arguments to gather evidence. " +
           kFinalAnswerInstruction;
}

inline std::string render_question_block(const QuestionRecord& question) {
    std::string out = "Question: " + question.question + "\nOptions:\n";
    for (std::size_t i = 0; i < question.options.size(); ++i) {
        out += option_letter(static_cast<int>(i)) + ". " + question.options[i] + "\n";
    }
    return out;
}

// ── agent loop ──────────────────────────────────────────────────

// Receives tool-loop happenings so topology runners can trace them.
using EventSink = std::function<void(TracePhase, const std::string& payload)>;

inline constexpr const char* kForcedDecisionMessage =
    "You have exhausted your tool budget. You must answer now with your final JSON answer.";

namespace detail {

inline std::string truncate_result(std::string text, int limit) {
    if (limit > 0 && static_cast<int>(text.size()) > limit) {
        text.resize(static_cast<std::size_t>(limit));
        text += "\n...[truncated]";
    }
    return text;
}

inline ModelTurn next_turn(ModelBackend& backend, std::vector<ChatMessage>& conversation,
                           const std::vector<ToolSchema>& tools, int option_count) {
    ChatRequest request;
    request.messages = conversation;
    request.tools = tools;
    const ModelTurnWire wire = backend.complete(request);
    if (wire.is_tool_call()) {
        conversation.push_back(
            {Role::Assistant, wire.tool_call->arguments_json, {}, wire.tool_call->name});
    } else {
        conversation.push_back({Role::Assistant, wire.text.value_or(""), {}, ""});
    }
    return turn_from_wire(wire, option_count);
}

}  // namespace detail

// The iterative tool-call loop shared by all modality agents: execute
// tool requests until the backend emits a final answer; once the budget
// is exhausted, demand a decision and accept only a final answer.
inline AgentReport run_agent(const AgentConfig& config, const QuestionRecord& question,
                             const ToolEnv& env, ModelBackend& backend,
                             const EventSink& sink = {},
                             const std::string& extra_context = "") {
    const int option_count = static_cast<int>(question.options.size());
    const auto& tools = tool_schemas_for(config.modality);

    std::vector<ChatMessage> conversation;
    conversation.push_back({Role::System,
                            config.system_prompt.empty()
                                ? default_agent_system_prompt(config.modality)
                                : config.system_prompt,
                            {},
                            ""});
    std::string user = render_question_block(question);
    if (!extra_context.empty()) user += "\n" + extra_context;
    conversation.push_back({Role::User, user, {}, ""});

    int used = 0;
    for (;;) {
        ModelTurn turn = detail::next_turn(backend, conversation, tools, option_count);
        if (turn.final) {
            return AgentReport{config.modality, turn.final->chosen, turn.final->rationale,
                               turn.final->evidence, used};
        }
        const ToolCall& call = *turn.tool;
        if (used >= config.tool_budget) {
            conversation.push_back(
                {Role::Tool, "ERROR: tool budget exhausted", {}, call.tool_name});
            conversation.push_back({Role::User, kForcedDecisionMessage, {}, ""});
            ModelTurn forced = detail::next_turn(backend, conversation, tools, option_count);
            if (!forced.final) {
                throw BudgetExceededNoAnswerError(
                    "agent still requested tools after the forced-decision message (budget " +
                    std::to_string(config.tool_budget) + ")");
            }
            return AgentReport{config.modality, forced.final->chosen, forced.final->rationale,
                               forced.final->evidence, used};
        }
        if (sink) sink(TracePhase::ToolCall, call.tool_name + " " + dump_stable(call.arguments));
        std::string result;
        bool executed = false;
        try {
            result = run_tool(env, question, config.modality, call);
            executed = true;
        } catch (const UnknownToolError& e) {
            result = std::string("ERROR: ") + e.what();
        } catch (const Error& e) {
            result = std::string("ERROR: ") + e.what();
            executed = true;  // a registered tool ran and failed
        }
        if (executed) ++used;
        result = detail::truncate_result(std::move(result), config.tool_result_limit);
        conversation.push_back({Role::Tool, result, {}, call.tool_name});
        if (sink) sink(TracePhase::ToolResult, result);
    }
}

// ── star-topology exchanges ─────────────────────────────────────

// Conversation state an agent keeps across organizer exchanges in one run.
struct AgentSession {
    AgentConfig config;
    std::vector<ChatMessage> conversation;
    int tools_used = 0;
    bool started = false;
};

// One organizer->agent exchange: the agent may run tools (shared budget
// across the whole session) and replies with plain text.
inline std::string agent_exchange(AgentSession& session, const QuestionRecord& question,
                                  const ToolEnv& env, ModelBackend& backend,
                                  const EventSink& sink = {}) {
    const auto& tools = tool_schemas_for(session.config.modality);
    for (;;) {
        ChatRequest request;
        request.messages = session.conversation;
        request.tools = tools;
        const ModelTurnWire wire = backend.complete(request);
        if (wire.is_text()) {
            session.conversation.push_back({Role::Assistant, *wire.text, {}, ""});
            return *wire.text;
        }
        json args = json::parse(wire.tool_call->arguments_json, nullptr, false);
        if (args.is_discarded()) {
            throw MalformedModelOutputError("tool call '" + wire.tool_call->name +
                                            "' has unparseable arguments");
        }
        session.conversation.push_back(
            {Role::Assistant, wire.tool_call->arguments_json, {}, wire.tool_call->name});
        if (session.tools_used >= session.config.tool_budget) {
            session.conversation.push_back(
                {Role::Tool, "ERROR: tool budget exhausted", {}, wire.tool_call->name});
            session.conversation.push_back(
                {Role::User, "You have exhausted your tool budget. Reply in plain text now.", {},
                 ""});
            ChatRequest retry;
            retry.messages = session.conversation;
            retry.tools = tools;
            const ModelTurnWire second = backend.complete(retry);
            if (!second.is_text()) {
                throw BudgetExceededNoAnswerError(
                    "agent still requested tools after the forced-reply message");
            }
            session.conversation.push_back({Role::Assistant, *second.text, {}, ""});
            return *second.text;
        }
        const ToolCall call{wire.tool_call->name, std::move(args)};
        if (sink) sink(TracePhase::ToolCall, call.tool_name + " " + dump_stable(call.arguments));
        std::string result;
        try {
            result = run_tool(env, question, session.config.modality, call);
            ++session.tools_used;
        } catch (const UnknownToolError& e) {
            result = std::string("ERROR: ") + e.what();
        } catch (const Error& e) {
            result = std::string("ERROR: ") + e.what();
            ++session.tools_used;
        }
        result = detail::truncate_result(std::move(result), session.config.tool_result_limit);
        session.conversation.push_back({Role::Tool, result, {}, call.tool_name});
        if (sink) sink(TracePhase::ToolResult, result);
    }
}

}  // namespace mavqa
