#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/strings.hpp"

namespace mavqa {

// ── taxonomy ────────────────────────────────────────────────────

// NExT-QA question taxonomy. Datasets without it map to Other.
enum class CategoryCode { CH, CW, DC, DL, DO, TC, TN, TP, Other };

inline constexpr std::array<CategoryCode, 8> kNextQaCategories = {
    CategoryCode::CH, CategoryCode::CW, CategoryCode::DC, CategoryCode::DL,
    CategoryCode::DO, CategoryCode::TC, CategoryCode::TN, CategoryCode::TP};

inline std::string to_string(CategoryCode c) {
    switch (c) {
        case CategoryCode::CH: return "CH";
        case CategoryCode::CW: return "CW";
        case CategoryCode::DC: return "DC";
        case CategoryCode::DL: return "DL";
        case CategoryCode::DO: return "DO";
        case CategoryCode::TC: return "TC";
        case CategoryCode::TN: return "TN";
        case CategoryCode::TP: return "TP";
        case CategoryCode::Other: return "OTHER";
    }
    return "OTHER";
}

inline CategoryCode category_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "ch") return CategoryCode::CH;
    if (u == "cw") return CategoryCode::CW;
    if (u == "dc") return CategoryCode::DC;
    if (u == "dl") return CategoryCode::DL;
    if (u == "do") return CategoryCode::DO;
    if (u == "tc") return CategoryCode::TC;
    if (u == "tn") return CategoryCode::TN;
    if (u == "tp") return CategoryCode::TP;
    return CategoryCode::Other;
}

enum class ModalityKind { Text, Video, Graph };

inline constexpr std::array<ModalityKind, 3> kAllModalities = {
    ModalityKind::Text, ModalityKind::Video, ModalityKind::Graph};

inline std::string to_string(ModalityKind m) {
    switch (m) {
        case ModalityKind::Text: return "text";
        case ModalityKind::Video: return "video";
        case ModalityKind::Graph: return "graph";
    }
    return "text";
}

inline ModalityKind modality_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "text") return ModalityKind::Text;
    if (u == "video") return ModalityKind::Video;
    if (u == "graph") return ModalityKind::Graph;
    throw ConfigError("unknown modality: " + std::string(s));
}

// Participant id of a modality agent in traces ("agent:text", ...).
inline std::string agent_id(ModalityKind m) {
    return "agent:" + to_string(m);
}

inline constexpr const char* kOrganizerId = "organizer";

// ── time ────────────────────────────────────────────────────────

struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    bool valid() const { return start >= 0.0 && start <= end; }

    // Closed-interval intersection; shared endpoints count.
    bool intersects(const TimeSpan& other) const {
        return start <= other.end && other.start <= end;
    }

    bool contains(const TimeSpan& inner) const {
        return start <= inner.start && inner.end <= end;
    }
};

// ── questions ───────────────────────────────────────────────────

// One multiple-choice video question. Option indices are 0-based;
// dataset letter labels map A->0 in order of appearance.
struct QuestionRecord {
    std::string id;
    std::string video_id;
    std::string question;
    std::vector<std::string> options;
    std::optional<int> gold;
    CategoryCode category = CategoryCode::Other;
};

// Trims and collapses option whitespace, rejects duplicate options,
// validates the gold index. Category stays as-is (loaders default to Other).
inline QuestionRecord normalize_question(const QuestionRecord& raw) {
    QuestionRecord q = raw;
    q.question = strings::normalize_ws(q.question);
    if (q.question.empty()) throw EmptyQuestionError("question text is empty (id=" + q.id + ")");
    if (q.options.empty()) throw EmptyQuestionError("question has no options (id=" + q.id + ")");
    std::set<std::string> seen;
    for (auto& opt : q.options) {
        opt = strings::normalize_ws(opt);
        if (!seen.insert(strings::to_lower(opt)).second) {
            throw DuplicateOptionsError("duplicate option after normalization: '" + opt +
                                        "' (id=" + q.id + ")");
        }
    }
    if (q.gold && (*q.gold < 0 || *q.gold >= static_cast<int>(q.options.size()))) {
        throw InvalidOptionError("gold index " + std::to_string(*q.gold) +
                                 " out of range (id=" + q.id + ")");
    }
    return q;
}

// "A".."Z" label for display; indices beyond 26 never occur in practice.
inline std::string option_letter(int index) {
    if (index < 0 || index >= 26) return std::to_string(index);
    return std::string(1, static_cast<char>('A' + index));
}

// ── agent outputs ───────────────────────────────────────────────

enum class EvidenceKind { CaptionRef, Triplet, VideoObservation };

inline std::string to_string(EvidenceKind k) {
    switch (k) {
        case EvidenceKind::CaptionRef: return "caption";
        case EvidenceKind::Triplet: return "triplet";
        case EvidenceKind::VideoObservation: return "video";
    }
    return "caption";
}

struct EvidenceItem {
    EvidenceKind kind = EvidenceKind::CaptionRef;
    std::optional<TimeSpan> time_span;
    std::string content;
};

struct AgentReport {
    ModalityKind modality = ModalityKind::Text;
    int chosen = 0;
    std::string rationale;
    std::vector<EvidenceItem> evidence;
    int tool_calls_used = 0;
};

struct Verdict {
    int final = 0;
    std::string justification;
    std::vector<AgentReport> reports;
    std::string policy_id;
};

// ── traces ──────────────────────────────────────────────────────

enum class TracePhase { Assign, ToolCall, ToolResult, AgentMessage, OrganizerMessage, Report, Verdict };

inline std::string to_string(TracePhase p) {
    switch (p) {
        case TracePhase::Assign: return "Assign";
        case TracePhase::ToolCall: return "ToolCall";
        case TracePhase::ToolResult: return "ToolResult";
        case TracePhase::AgentMessage: return "AgentMessage";
        case TracePhase::OrganizerMessage: return "OrganizerMessage";
        case TracePhase::Report: return "Report";
        case TracePhase::Verdict: return "Verdict";
    }
    return "Assign";
}

inline TracePhase trace_phase_from_string(std::string_view s) {
    if (s == "Assign") return TracePhase::Assign;
    if (s == "ToolCall") return TracePhase::ToolCall;
    if (s == "ToolResult") return TracePhase::ToolResult;
    if (s == "AgentMessage") return TracePhase::AgentMessage;
    if (s == "OrganizerMessage") return TracePhase::OrganizerMessage;
    if (s == "Report") return TracePhase::Report;
    if (s == "Verdict") return TracePhase::Verdict;
    throw ConfigError("unknown trace phase: " + std::string(s));
}

// One message in an orchestration run. Sequencing is gap-free from 0
// within a run; recipients must be a subset of visible_to.
struct TraceEvent {
    std::uint64_t seq = 0;
    TracePhase phase = TracePhase::Assign;
    std::string sender;
    std::set<std::string> recipients;
    std::set<std::string> visible_to;
    std::string payload;
    std::string payload_digest;
};

inline bool is_agent_participant(const std::string& id) {
    return id.rfind("agent:", 0) == 0;
}

}  // namespace mavqa
