#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mavqa/agents.hpp"
#include "mavqa/backends.hpp"
#include "mavqa/core.hpp"
#include "mavqa/digest.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/organizer.hpp"
#include "mavqa/serde.hpp"

namespace mavqa {

// ── topology kinds ──────────────────────────────────────────────

enum class TopologyKind { Report, Star, Debate, ReportStar };

inline std::string to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::Report: return "report";
        case TopologyKind::Star: return "star";
        case TopologyKind::Debate: return "debate";
        case TopologyKind::ReportStar: return "report_star";
    }
    return "report";
}

inline TopologyKind topology_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "report") return TopologyKind::Report;
    if (u == "star") return TopologyKind::Star;
    if (u == "debate") return TopologyKind::Debate;
    if (u == "report_star" || u == "reportstar") return TopologyKind::ReportStar;
    throw ConfigError("unknown topology: " + std::string(s));
}

// ── run artifacts ───────────────────────────────────────────────

struct RunTrace {
    TopologyKind topology = TopologyKind::Report;
    std::vector<TraceEvent> events;
    Verdict verdict;
    std::vector<ModalityKind> debate_order;  // populated for Debate
    std::string question_id;
    std::string config_digest;
};

struct Violation {
    std::string rule_id;
    std::uint64_t event_seq = 0;
    std::string description;
};

// Single sequencer for a run's trace. Appends assign gap-free seq
// numbers from 0; recipients must be a subset of visible_to.
class TraceRecorder {
public:
    struct Pending {
        TracePhase phase = TracePhase::Assign;
        std::string sender;
        std::set<std::string> recipients;
        std::set<std::string> visible_to;
        std::string payload;
    };

    void append(TracePhase phase, std::string sender, std::set<std::string> recipients,
                std::set<std::string> visible_to, std::string payload) {
        append(Pending{phase, std::move(sender), std::move(recipients), std::move(visible_to),
                       std::move(payload)});
    }

    void append(Pending pending) {
        std::lock_guard lock(mutex_);
        append_locked(std::move(pending));
    }

    // Deterministic merge of a privately buffered event sequence.
    void splice(std::vector<Pending> buffered) {
        std::lock_guard lock(mutex_);
        for (auto& p : buffered) append_locked(std::move(p));
    }

    std::vector<TraceEvent> take() {
        std::lock_guard lock(mutex_);
        return std::move(events_);
    }

private:
    void append_locked(Pending p) {
        for (const auto& r : p.recipients) {
            if (!p.visible_to.count(r)) {
                throw Error("trace event recipients must be a subset of visible_to (" + r + ")");
            }
        }
        TraceEvent e;
        e.seq = next_++;
        e.phase = p.phase;
        e.sender = std::move(p.sender);
        e.recipients = std::move(p.recipients);
        e.visible_to = std::move(p.visible_to);
        e.payload = std::move(p.payload);
        e.payload_digest = sha256_hex(e.payload);
        events_.push_back(std::move(e));
    }

    std::mutex mutex_;
    std::uint64_t next_ = 0;
    std::vector<TraceEvent> events_;
};

// ── run configuration ───────────────────────────────────────────

struct OrganizerConfig {
    enum class Aggregate { Model, Majority, BestCategory };

    std::string backend_id;
    Aggregate aggregate = Aggregate::Model;
    ModalityRanking ranking = default_ranking();
    CategoryTable table = default_category_table();
    std::string system_prompt;  // model aggregate only; empty -> default
};

struct RunOptions {
    int max_exchanges = 8;
    bool concurrent_report = false;
    std::string question_id;
    std::string config_digest;
};

namespace detail {

inline void validate_agents(const std::vector<AgentConfig>& agents) {
    if (agents.size() != kAllModalities.size()) {
        throw ConfigError("expected exactly one agent per modality");
    }
    std::set<ModalityKind> seen;
    for (const auto& a : agents) {
        if (!seen.insert(a.modality).second) {
            throw ConfigError("duplicate agent for modality " + to_string(a.modality));
        }
    }
}

inline std::set<std::string> all_agent_ids(const std::vector<AgentConfig>& agents) {
    std::set<std::string> ids;
    for (const auto& a : agents) ids.insert(agent_id(a.modality));
    return ids;
}

// One agent's isolated run, privately buffered so concurrent agents
// never interleave in the trace.
struct AgentPhase {
    std::vector<TraceRecorder::Pending> events;
    std::optional<AgentReport> report;
    std::string error;
};

inline AgentPhase run_agent_buffered(const QuestionRecord& question, const AgentConfig& config,
                                     const BackendRegistry& backends, const ToolEnv& env,
                                     const std::string& extra_context = "") {
    const std::string aid = agent_id(config.modality);
    AgentPhase out;
    std::string assign = render_question_block(question);
    if (!extra_context.empty()) assign += "\n" + extra_context;
    out.events.push_back(
        {TracePhase::Assign, kOrganizerId, {aid}, {kOrganizerId, aid}, assign});
    EventSink sink = [&](TracePhase phase, const std::string& payload) {
        out.events.push_back({phase, aid, {}, {aid}, payload});
    };
    try {
        AgentReport report =
            run_agent(config, question, env, backends.get(config.backend_id), sink, extra_context);
        out.events.push_back({TracePhase::Report,
                              aid,
                              {kOrganizerId},
                              {aid, kOrganizerId},
                              dump_stable(to_json(report))});
        out.report = std::move(report);
    } catch (const Error& e) {
        out.error = e.what();
        out.events.push_back({TracePhase::Report,
                              aid,
                              {kOrganizerId},
                              {aid, kOrganizerId},
                              dump_stable(json{{"agent_failure", e.what()}})});
    }
    return out;
}

inline Verdict aggregate_reports(const QuestionRecord& question,
                                 const std::vector<AgentReport>& reports,
                                 const OrganizerConfig& organizer,
                                 const BackendRegistry& backends) {
    switch (organizer.aggregate) {
        case OrganizerConfig::Aggregate::Model:
            return organize_model(question, reports, backends.get(organizer.backend_id),
                                  organizer.ranking);
        case OrganizerConfig::Aggregate::Majority: {
            const PolicyDecision d = majority_decision(reports, organizer.ranking);
            return Verdict{d.option, "deterministic majority vote over agent reports", reports,
                           d.rule_id};
        }
        case OrganizerConfig::Aggregate::BestCategory: {
            const PolicyDecision d =
                best_category_decision(question.category, reports, organizer.table,
                                       organizer.ranking);
            return Verdict{d.option,
                           "per-category best modality (" + to_string(question.category) + ")",
                           reports, d.rule_id};
        }
    }
    throw ConfigError("unhandled aggregate kind");
}

inline void append_verdict_event(TraceRecorder& rec, const std::vector<AgentConfig>& agents,
                                 const Verdict& verdict) {
    std::set<std::string> ids = all_agent_ids(agents);
    std::set<std::string> visible = ids;
    visible.insert(kOrganizerId);
    rec.append(TracePhase::Verdict, kOrganizerId, std::move(ids), std::move(visible),
               dump_stable(to_json(verdict)));
}

// Report phase shared by Report and ReportStar: isolated agent runs,
// optionally concurrent, merged in agent order.
inline std::vector<AgentReport> collect_reports(const QuestionRecord& question,
                                                const std::vector<AgentConfig>& agents,
                                                const BackendRegistry& backends,
                                                const ToolEnv& env, bool concurrent,
                                                TraceRecorder& rec) {
    std::vector<AgentPhase> phases(agents.size());
    if (concurrent) {
        std::vector<std::future<AgentPhase>> futures;
        futures.reserve(agents.size());
        for (const auto& config : agents) {
            futures.push_back(std::async(std::launch::async, [&backends, &question, &env,
                                                              &config]() {
                return run_agent_buffered(question, config, backends, env);
            }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) phases[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < agents.size(); ++i) {
            phases[i] = run_agent_buffered(question, agents[i], backends, env);
        }
    }
    std::vector<AgentReport> reports;
    for (auto& phase : phases) {
        rec.splice(std::move(phase.events));
        if (phase.report) reports.push_back(std::move(*phase.report));
    }
    return reports;
}

}  // namespace detail

// ── Report ──────────────────────────────────────────────────────

// Agents run in isolation; only their final reports reach the organizer.
inline RunTrace run_report(const QuestionRecord& question, const std::vector<AgentConfig>& agents,
                           const OrganizerConfig& organizer, const BackendRegistry& backends,
                           const ToolEnv& env, const RunOptions& options = {}) {
    detail::validate_agents(agents);
    TraceRecorder rec;
    const std::vector<AgentReport> reports = detail::collect_reports(
        question, agents, backends, env, options.concurrent_report, rec);
    if (reports.empty()) {
        throw RunFailedError("all agents failed; no reports to aggregate (question " +
                             question.id + ")");
    }
    const Verdict verdict = detail::aggregate_reports(question, reports, organizer, backends);
    detail::append_verdict_event(rec, agents, verdict);
    return RunTrace{TopologyKind::Report, rec.take(), verdict,          {},
                    options.question_id.empty() ? question.id : options.question_id,
                    options.config_digest};
}

// ── Star ────────────────────────────────────────────────────────

inline const ToolSchema& ask_agent_schema() {
    static const ToolSchema schema{
        "ask_agent",
        "Send a message to one modality agent and receive its reply. modality is one of"
        " text, video, graph.",
        json{{"type", "object"},
             {"properties",
              {{"modality", {{"type", "string"}, {"enum", {"text", "video", "graph"}}}},
               {"message", {{"type", "string"}}}}},
             {"required", {"modality", "message"}}}};
    return schema;
}

inline constexpr const char* kStarOrganizerInstruction =
    "Consult the modality agents one at a time with the ask_agent tool; each call sends your"
    " message to one agent and returns its reply. Agents never hear each other. When you are"
    " ready to decide, reply with the final JSON answer: {\"answer\": <0-based option index>,"
    " \"rationale\": \"<why>\"}.";

inline constexpr const char* kForcedVerdictMessage =
    "You have reached the exchange limit. You must decide now: reply with the final JSON answer.";

namespace detail {

// Organizer-driven exchange loop shared by Star and the second phase of
// ReportStar. The organizer context accumulates every exchange.
inline Verdict star_loop(const QuestionRecord& question, const std::vector<AgentConfig>& agents,
                         const OrganizerConfig& organizer, const BackendRegistry& backends,
                         const ToolEnv& env, TraceRecorder& rec, const RunOptions& options,
                         const std::string& seed_context,
                         const std::map<ModalityKind, std::string>& agent_seed_context,
                         const std::string& policy_id) {
    const int option_count = static_cast<int>(question.options.size());
    ModelBackend& organizer_backend = backends.get(organizer.backend_id);

    std::vector<ChatMessage> convo;
    convo.push_back({Role::System,
                     organizer.system_prompt.empty() ? kOrganizerSystemPrompt
                                                     : organizer.system_prompt,
                     {},
                     ""});
    std::string user = render_question_block(question);
    if (!seed_context.empty()) user += "\n" + seed_context;
    user += "\n";
    user += kStarOrganizerInstruction;
    convo.push_back({Role::User, user, {}, ""});

    std::map<ModalityKind, AgentSession> sessions;
    for (const auto& a : agents) sessions[a.modality] = AgentSession{a, {}, 0, false};

    const std::vector<ToolSchema> tools = {ask_agent_schema()};
    int exchanges = 0;
    for (;;) {
        ChatRequest request;
        request.messages = convo;
        request.tools = tools;
        const ModelTurnWire wire = organizer_backend.complete(request);

        if (wire.is_text()) {
            convo.push_back({Role::Assistant, *wire.text, {}, ""});
            FinalAnswer fa;
            try {
                fa = parse_final_answer(*wire.text, option_count);
            } catch (const Error& e) {
                throw RunFailedError(std::string("star organizer produced an unusable verdict: ") +
                                     e.what());
            }
            return Verdict{fa.chosen, fa.rationale.empty() ? *wire.text : fa.rationale, {},
                           policy_id};
        }

        convo.push_back(
            {Role::Assistant, wire.tool_call->arguments_json, {}, wire.tool_call->name});
        if (exchanges >= options.max_exchanges) {
            convo.push_back(
                {Role::Tool, "ERROR: exchange limit reached", {}, wire.tool_call->name});
            convo.push_back({Role::User, kForcedVerdictMessage, {}, ""});
            ChatRequest forced;
            forced.messages = convo;
            forced.tools = tools;
            const ModelTurnWire final_wire = organizer_backend.complete(forced);
            if (!final_wire.is_text()) {
                throw RunFailedError("star organizer kept requesting exchanges past the limit");
            }
            convo.push_back({Role::Assistant, *final_wire.text, {}, ""});
            FinalAnswer fa;
            try {
                fa = parse_final_answer(*final_wire.text, option_count);
            } catch (const Error& e) {
                throw RunFailedError(std::string("forced star verdict unusable: ") + e.what());
            }
            return Verdict{fa.chosen, fa.rationale.empty() ? *final_wire.text : fa.rationale, {},
                           policy_id + ":forced"};
        }

        ++exchanges;
        json args = json::parse(wire.tool_call->arguments_json, nullptr, false);
        std::string reply;
        if (wire.tool_call->name != "ask_agent" || args.is_discarded() ||
            !args.contains("modality")) {
            reply = "ERROR: use ask_agent with arguments {modality, message}";
        } else {
            ModalityKind m;
            try {
                m = modality_from_string(args["modality"].get<std::string>());
            } catch (const Error&) {
                reply = "ERROR: modality must be one of text, video, graph";
                convo.push_back({Role::Tool, reply, {}, wire.tool_call->name});
                continue;
            }
            const std::string message = args.value("message", std::string());
            AgentSession& session = sessions.at(m);
            const std::string aid = agent_id(m);

            if (!session.started) {
                std::string assign = render_question_block(question);
                auto seed = agent_seed_context.find(m);
                if (seed != agent_seed_context.end() && !seed->second.empty()) {
                    assign += "\n" + seed->second;
                }
                session.conversation.push_back(
                    {Role::System,
                     session.config.system_prompt.empty()
                         ? default_agent_system_prompt(m) +
                               " The organizer will consult you; answer its questions in plain"
                               " text."
                         : session.config.system_prompt,
                     {},
                     ""});
                session.conversation.push_back({Role::User, assign, {}, ""});
                session.started = true;
                rec.append(TracePhase::Assign, kOrganizerId, {aid}, {kOrganizerId, aid}, assign);
            }
            rec.append(TracePhase::OrganizerMessage, kOrganizerId, {aid}, {kOrganizerId, aid},
                       message);
            session.conversation.push_back({Role::User, message, {}, ""});
            EventSink sink = [&rec, &aid](TracePhase phase, const std::string& payload) {
                rec.append(phase, aid, {}, {aid}, payload);
            };
            try {
                reply = agent_exchange(session, question, env,
                                       backends.get(session.config.backend_id), sink);
            } catch (const Error& e) {
                reply = std::string("ERROR: agent unavailable: ") + e.what();
            }
            rec.append(TracePhase::AgentMessage, aid, {kOrganizerId}, {aid, kOrganizerId}, reply);
        }
        convo.push_back({Role::Tool, reply, {}, "ask_agent"});
    }
}

}  // namespace detail

// Organizer converses with any agent while tracking the full history;
// agents never talk to each other. A forced verdict is requested at the
// exchange cap.
inline RunTrace run_star(const QuestionRecord& question, const std::vector<AgentConfig>& agents,
                         const OrganizerConfig& organizer, const BackendRegistry& backends,
                         const ToolEnv& env, const RunOptions& options = {}) {
    detail::validate_agents(agents);
    if (organizer.aggregate != OrganizerConfig::Aggregate::Model) {
        throw ConfigError("star topology requires a model organizer");
    }
    TraceRecorder rec;
    const Verdict verdict = detail::star_loop(question, agents, organizer, backends, env, rec,
                                              options, "", {}, "star_model");
    detail::append_verdict_event(rec, agents, verdict);
    return RunTrace{TopologyKind::Star, rec.take(), verdict, {},
                    options.question_id.empty() ? question.id : options.question_id,
                    options.config_digest};
}

// ── Debate ──────────────────────────────────────────────────────

// Agents answer sequentially, each seeing the claims of all prior
// agents; the organizer decides after the last claim.
inline RunTrace run_debate(const QuestionRecord& question, const std::vector<AgentConfig>& agents,
                           const std::vector<ModalityKind>& order,
                           const OrganizerConfig& organizer, const BackendRegistry& backends,
                           const ToolEnv& env, const RunOptions& options = {}) {
    detail::validate_agents(agents);
    if (order.size() != kAllModalities.size() ||
        std::set<ModalityKind>(order.begin(), order.end()).size() != order.size()) {
        throw ConfigError("debate order must cover each modality exactly once");
    }

    TraceRecorder rec;
    std::vector<AgentReport> reports;
    std::string claims_context;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const ModalityKind m = order[k];
        const auto config_it = std::find_if(agents.begin(), agents.end(),
                                            [m](const AgentConfig& a) { return a.modality == m; });
        const std::string aid = agent_id(m);

        std::string extra;
        if (claims_context.empty()) {
            extra = "You are the first agent in a debate; later agents will see your claim.";
        } else {
            extra = "Claims from prior agents in this debate:\n" + claims_context +
                    "You may challenge or support these claims in your rationale.";
        }

        std::set<std::string> later_ids;
        for (std::size_t j = k + 1; j < order.size(); ++j) later_ids.insert(agent_id(order[j]));

        detail::AgentPhase phase =
            detail::run_agent_buffered(question, *config_it, backends, env, extra);
        // The final Report-phase event becomes the debate claim, visible
        // to the organizer and every later agent.
        for (auto& p : phase.events) {
            if (p.phase == TracePhase::Report) {
                p.phase = TracePhase::AgentMessage;
                p.recipients.insert(later_ids.begin(), later_ids.end());
                p.visible_to.insert(later_ids.begin(), later_ids.end());
            }
        }
        rec.splice(std::move(phase.events));

        if (phase.report) {
            claims_context += "[" + to_string(m) + " agent] chose option " +
                              option_letter(phase.report->chosen) + ": " +
                              phase.report->rationale + "\n";
            reports.push_back(std::move(*phase.report));
        } else {
            claims_context += "[" + to_string(m) + " agent] failed to produce a claim.\n";
        }
    }
    if (reports.empty()) {
        throw RunFailedError("all debate agents failed (question " + question.id + ")");
    }
    const Verdict verdict = detail::aggregate_reports(question, reports, organizer, backends);
    detail::append_verdict_event(rec, agents, verdict);
    return RunTrace{TopologyKind::Debate, rec.take(), verdict, order,
                    options.question_id.empty() ? question.id : options.question_id,
                    options.config_digest};
}

// ── Report-Star hybrid ──────────────────────────────────────────

// Phase 1 collects isolated reports exactly like Report; phase 2 runs a
// Star round seeded with those reports. The verdict comes from phase 2.
inline RunTrace run_report_star(const QuestionRecord& question,
                                const std::vector<AgentConfig>& agents,
                                const OrganizerConfig& organizer, const BackendRegistry& backends,
                                const ToolEnv& env, const RunOptions& options = {}) {
    detail::validate_agents(agents);
    if (organizer.aggregate != OrganizerConfig::Aggregate::Model) {
        throw ConfigError("report_star topology requires a model organizer");
    }
    TraceRecorder rec;
    const std::vector<AgentReport> reports = detail::collect_reports(
        question, agents, backends, env, options.concurrent_report, rec);
    if (reports.empty()) {
        throw RunFailedError("all agents failed in the report phase (question " + question.id +
                             ")");
    }

    std::string seed = "Initial reports from the modality agents:\n";
    std::map<ModalityKind, std::string> agent_seed;
    for (const auto& r : reports) {
        seed += "[" + to_string(r.modality) + " agent] chose option " + option_letter(r.chosen) +
                ": " + r.rationale + "\n";
        agent_seed[r.modality] =
            "Your earlier report: chose option " + option_letter(r.chosen) + ": " + r.rationale;
    }
    seed += "You may re-query any agent before deciding.";

    Verdict verdict = detail::star_loop(question, agents, organizer, backends, env, rec, options,
                                        seed, agent_seed, "report_star_model");
    verdict.reports = reports;
    detail::append_verdict_event(rec, agents, verdict);
    return RunTrace{TopologyKind::ReportStar, rec.take(), verdict, {},
                    options.question_id.empty() ? question.id : options.question_id,
                    options.config_digest};
}

// ── single-agent mode ───────────────────────────────────────────

// One modality agent answers alone; its report becomes the verdict.
inline RunTrace run_single(const QuestionRecord& question, const AgentConfig& agent,
                           const BackendRegistry& backends, const ToolEnv& env,
                           const RunOptions& options = {}) {
    TraceRecorder rec;
    detail::AgentPhase phase = detail::run_agent_buffered(question, agent, backends, env);
    rec.splice(std::move(phase.events));
    if (!phase.report) {
        throw RunFailedError("single-agent run failed: " + phase.error);
    }
    Verdict verdict{phase.report->chosen, phase.report->rationale, {*phase.report},
                    "single:" + to_string(agent.modality)};
    std::set<std::string> ids{agent_id(agent.modality)};
    std::set<std::string> visible = ids;
    visible.insert(kOrganizerId);
    rec.append(TracePhase::Verdict, kOrganizerId, std::move(ids), std::move(visible),
               dump_stable(to_json(verdict)));
    return RunTrace{TopologyKind::Report, rec.take(), verdict, {},
                    options.question_id.empty() ? question.id : options.question_id,
                    options.config_digest};
}

// ── audit ───────────────────────────────────────────────────────

namespace detail {

inline void audit_structural(const std::vector<TraceEvent>& events,
                             std::vector<Violation>& out) {
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].seq != i) {
            out.push_back({"SeqGap", events[i].seq,
                           "event sequence is not gap-free from 0 at position " +
                               std::to_string(i)});
            break;
        }
    }
    for (const auto& e : events) {
        for (const auto& r : e.recipients) {
            if (!e.visible_to.count(r)) {
                out.push_back({"RecipientsNotVisible", e.seq,
                               "recipient " + r + " missing from visible_to"});
            }
        }
    }
    if (events.empty() || events.back().phase != TracePhase::Verdict) {
        out.push_back({"MissingVerdict", events.empty() ? 0 : events.back().seq,
                       "trace does not end with a Verdict event"});
    }
}

// Report rules: no cross-agent visibility, nothing from an agent reaches
// the organizer except Report events, at most one report per agent, and
// the verdict comes after every report.
inline void audit_report_rules(const std::vector<TraceEvent>& events,
                               std::vector<Violation>& out) {
    std::map<std::string, int> reports_per_agent;
    std::optional<std::uint64_t> verdict_seq;
    std::uint64_t last_report_seq = 0;
    for (const auto& e : events) {
        if (is_agent_participant(e.sender)) {
            for (const auto& v : e.visible_to) {
                if (is_agent_participant(v) && v != e.sender) {
                    out.push_back({"CrossAgentVisibility", e.seq,
                                   "event from " + e.sender + " visible to " + v});
                }
            }
            if (e.visible_to.count(kOrganizerId) && e.phase != TracePhase::Report) {
                out.push_back({"EarlyOrganizerInput", e.seq,
                               "non-report event from " + e.sender + " visible to the organizer"});
            }
            if (e.phase == TracePhase::Report) {
                last_report_seq = e.seq;
                if (++reports_per_agent[e.sender] > 1) {
                    out.push_back({"DuplicateReport", e.seq,
                                   e.sender + " produced more than one report"});
                }
            }
        } else if (e.phase == TracePhase::Verdict) {
            verdict_seq = e.seq;
        }
    }
    if (verdict_seq && *verdict_seq < last_report_seq) {
        out.push_back({"OrganizerBeforeReports", *verdict_seq,
                       "verdict issued before all reports were collected"});
    }
}

// Star rule: agents may be visible to themselves and the organizer only.
inline void audit_star_rules(const std::vector<TraceEvent>& events, std::vector<Violation>& out) {
    for (const auto& e : events) {
        if (!is_agent_participant(e.sender)) continue;
        for (const auto& v : e.visible_to) {
            if (is_agent_participant(v) && v != e.sender) {
                out.push_back({"CrossAgentVisibility", e.seq,
                               "event from " + e.sender + " visible to " + v});
            }
        }
    }
}

// Debate rules: claims must follow the declared order, and no claim may
// be visible to an agent whose own claim came earlier.
inline void audit_debate_rules(const std::vector<TraceEvent>& events,
                               const std::vector<ModalityKind>& order,
                               std::vector<Violation>& out) {
    std::vector<const TraceEvent*> claims;
    for (const auto& e : events) {
        if (e.phase == TracePhase::AgentMessage && is_agent_participant(e.sender)) {
            claims.push_back(&e);
        }
    }
    if (!order.empty()) {
        for (std::size_t i = 0; i < claims.size(); ++i) {
            if (i >= order.size() || claims[i]->sender != agent_id(order[i])) {
                out.push_back({"OutOfOrderClaim", claims[i]->seq,
                               "claim from " + claims[i]->sender +
                                   " does not match the declared debate order"});
            }
        }
    }
    std::map<std::string, std::uint64_t> claim_seq;
    for (const auto* c : claims) {
        if (!claim_seq.count(c->sender)) claim_seq[c->sender] = c->seq;
    }
    for (const auto* c : claims) {
        for (const auto& v : c->visible_to) {
            if (!is_agent_participant(v) || v == c->sender) continue;
            auto it = claim_seq.find(v);
            if (it != claim_seq.end() && it->second < c->seq) {
                out.push_back({"ForwardVisibility", c->seq,
                               "claim from " + c->sender + " visible to earlier claimant " + v});
            }
        }
    }
}

}  // namespace detail

// Checks a trace against its declared topology's communication rules.
inline std::vector<Violation> audit_trace(const RunTrace& trace) {
    std::vector<Violation> out;
    detail::audit_structural(trace.events, out);
    switch (trace.topology) {
        case TopologyKind::Report:
            detail::audit_report_rules(trace.events, out);
            break;
        case TopologyKind::Star:
            detail::audit_star_rules(trace.events, out);
            break;
        case TopologyKind::Debate:
            detail::audit_debate_rules(trace.events, trace.debate_order, out);
            break;
        case TopologyKind::ReportStar: {
            // Phase 1 obeys Report rules up to the last Report event,
            // phase 2 obeys Star rules.
            std::uint64_t boundary = 0;
            for (const auto& e : trace.events) {
                if (e.phase == TracePhase::Report) boundary = e.seq;
            }
            std::vector<TraceEvent> phase1, phase2;
            for (const auto& e : trace.events) {
                (e.seq <= boundary ? phase1 : phase2).push_back(e);
            }
            detail::audit_report_rules(phase1, out);
            detail::audit_star_rules(phase2, out);
            break;
        }
    }
    return out;
}

// ── trace files ─────────────────────────────────────────────────

// Line-delimited: a header record then one record per event, stable
// field order for diffing.
inline void write_trace_file(const std::string& path, const RunTrace& trace) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write trace file: " + path);
    json order = json::array();
    for (ModalityKind m : trace.debate_order) order.push_back(to_string(m));
    json header{{"type", "header"},
                {"question_id", trace.question_id},
                {"topology", to_string(trace.topology)},
                {"config_digest", trace.config_digest},
                {"debate_order", std::move(order)}};
    out << dump_stable(header) << "\n";
    for (const auto& e : trace.events) {
        json je{{"type", "event"},
                {"seq", e.seq},
                {"phase", to_string(e.phase)},
                {"sender", e.sender},
                {"recipients", e.recipients},
                {"visible_to", e.visible_to},
                {"payload", e.payload},
                {"payload_digest", e.payload_digest}};
        out << dump_stable(je) << "\n";
    }
}

inline RunTrace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read trace file: " + path);
    RunTrace trace;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (strings::trim(line).empty()) continue;
        json j = json::parse(line);
        const std::string type = j.value("type", std::string());
        if (type == "header") {
            trace.question_id = j.value("question_id", std::string());
            trace.topology = topology_from_string(j.value("topology", std::string("report")));
            trace.config_digest = j.value("config_digest", std::string());
            for (const auto& m : j.value("debate_order", json::array())) {
                trace.debate_order.push_back(modality_from_string(m.get<std::string>()));
            }
            have_header = true;
        } else if (type == "event") {
            TraceEvent e;
            e.seq = j.at("seq").get<std::uint64_t>();
            e.phase = trace_phase_from_string(j.at("phase").get<std::string>());
            e.sender = j.at("sender").get<std::string>();
            for (const auto& r : j.at("recipients")) e.recipients.insert(r.get<std::string>());
            for (const auto& v : j.at("visible_to")) e.visible_to.insert(v.get<std::string>());
            e.payload = j.value("payload", std::string());
            e.payload_digest = j.value("payload_digest", std::string());
            trace.events.push_back(std::move(e));
        }
    }
    if (!have_header) throw Error("trace file has no header: " + path);
    if (!trace.events.empty() && trace.events.back().phase == TracePhase::Verdict) {
        try {
            trace.verdict = verdict_from_json(json::parse(trace.events.back().payload));
        } catch (const json::exception&) {
        }
    }
    return trace;
}

}  // namespace mavqa
