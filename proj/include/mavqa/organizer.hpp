#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mavqa/agents.hpp"
#include "mavqa/backends.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"

namespace mavqa {

// ── rankings & category routing ─────────────────────────────────

// Permutation of the three modalities, best first. The default order is
// the overall single-agent accuracy order: Video > Text > Graph.
using ModalityRanking = std::array<ModalityKind, 3>;

inline ModalityRanking default_ranking() {
    return {ModalityKind::Video, ModalityKind::Text, ModalityKind::Graph};
}

using CategoryTable = std::map<CategoryCode, ModalityKind>;

// Best single-agent modality per question category, frozen from the
// per-category accuracy comparison and shipped as data. Ties resolve by
// the default ranking.
inline CategoryTable default_category_table() {
    return {{CategoryCode::CH, ModalityKind::Text},  {CategoryCode::CW, ModalityKind::Video},
            {CategoryCode::DC, ModalityKind::Video}, {CategoryCode::DL, ModalityKind::Text},
            {CategoryCode::DO, ModalityKind::Video}, {CategoryCode::TC, ModalityKind::Text},
            {CategoryCode::TN, ModalityKind::Video}, {CategoryCode::TP, ModalityKind::Text}};
}

// ── deterministic policies ──────────────────────────────────────

struct PolicyDecision {
    int option = 0;
    std::string rule_id;
};

namespace detail {

inline const AgentReport* report_for(const std::vector<AgentReport>& reports, ModalityKind m) {
    for (const auto& r : reports) {
        if (r.modality == m) return &r;
    }
    return nullptr;
}

}  // namespace detail

// Majority vote; ties go to the highest-ranked modality among the tied
// voters.
inline PolicyDecision majority_decision(const std::vector<AgentReport>& reports,
                                        const ModalityRanking& ranking) {
    if (reports.empty()) throw EmptyRunError("majority vote needs at least one report");
    std::map<int, int> votes;
    for (const auto& r : reports) ++votes[r.chosen];
    int best_count = 0;
    for (const auto& [option, count] : votes) best_count = std::max(best_count, count);
    std::vector<int> tied;
    for (const auto& [option, count] : votes) {
        if (count == best_count) tied.push_back(option);
    }
    if (tied.size() == 1) return {tied[0], "majority/strict"};
    for (ModalityKind m : ranking) {
        const AgentReport* r = detail::report_for(reports, m);
        if (r != nullptr && std::find(tied.begin(), tied.end(), r->chosen) != tied.end()) {
            return {r->chosen, "majority/rank_tiebreak"};
        }
    }
    // Unreachable for non-empty reports: every tied option has a voter.
    return {tied[0], "majority/rank_tiebreak"};
}

inline int policy_majority(const std::vector<AgentReport>& reports,
                           const ModalityRanking& ranking) {
    return majority_decision(reports, ranking).option;
}

// The designated modality's answer for the question category; falls back
// to ranking order when that report is missing, and to majority vote for
// categories outside the table.
inline PolicyDecision best_category_decision(CategoryCode category,
                                             const std::vector<AgentReport>& reports,
                                             const CategoryTable& table,
                                             const ModalityRanking& ranking) {
    if (reports.empty()) throw EmptyRunError("best-category policy needs at least one report");
    auto it = table.find(category);
    if (it == table.end()) {
        PolicyDecision majority = majority_decision(reports, ranking);
        majority.rule_id = "best_category/unknown_category->" + majority.rule_id;
        return majority;
    }
    if (const AgentReport* r = detail::report_for(reports, it->second)) {
        return {r->chosen, "best_category/" + to_string(category)};
    }
    for (ModalityKind m : ranking) {
        if (const AgentReport* r = detail::report_for(reports, m)) {
            return {r->chosen, "best_category/ranking_fallback"};
        }
    }
    throw EmptyRunError("best-category policy found no usable report");
}

inline int policy_best_category(CategoryCode category, const std::vector<AgentReport>& reports,
                                const CategoryTable& table,
                                const ModalityRanking& ranking = default_ranking()) {
    return best_category_decision(category, reports, table, ranking).option;
}

// ── model-driven organizer ──────────────────────────────────────

// Matches a model's textual answer to an option: structured letter/index
// first, then exact option-text match, then case-insensitive longest
// common prefix. Ambiguity yields nullopt.
inline std::optional<int> match_option(const std::string& answer,
                                       const std::vector<std::string>& options) {
    const int n = static_cast<int>(options.size());
    try {
        const FinalAnswer parsed = parse_final_answer(answer, n);
        return parsed.chosen;
    } catch (const Error&) {
    }
    const std::string norm = strings::to_lower(strings::normalize_ws(answer));
    for (int i = 0; i < n; ++i) {
        if (strings::to_lower(strings::normalize_ws(options[i])) == norm) return i;
    }
    std::size_t best_len = 0;
    int best_index = -1;
    bool ambiguous = false;
    for (int i = 0; i < n; ++i) {
        const std::string opt = strings::to_lower(strings::normalize_ws(options[i]));
        std::size_t k = 0;
        while (k < opt.size() && k < norm.size() && opt[k] == norm[k]) ++k;
        if (k == 0) continue;
        if (k > best_len) {
            best_len = k;
            best_index = i;
            ambiguous = false;
        } else if (k == best_len) {
            ambiguous = true;
        }
    }
    if (best_index >= 0 && !ambiguous) return best_index;
    return std::nullopt;
}

inline std::string organizer_report_prompt(const QuestionRecord& question,
                                           const std::vector<AgentReport>& reports) {
    std::string prompt = render_question_block(question);
    prompt += "\nReports from the modality agents:\n";
    for (const auto& r : reports) {
        prompt += "\n[" + to_string(r.modality) + " agent] chose option " +
                  option_letter(r.chosen) + " (" + question.options[static_cast<std::size_t>(
                                                       r.chosen)] +
                  ")\nrationale: " + r.rationale + "\n";
        for (const auto& e : r.evidence) {
            prompt += "evidence (" + to_string(e.kind) + ")";
            if (e.time_span) {
                prompt += " [" + strings::format_number(e.time_span->start) + "s-" +
                          strings::format_number(e.time_span->end) + "s]";
            }
            prompt += ": " + e.content + "\n";
        }
    }
    prompt += "\nWeigh the evidence, resolve conflicts between the agents, and select the best"
              " matching option. Reply with the option letter and a short justification.";
    return prompt;
}

inline constexpr const char* kOrganizerSystemPrompt =
    "You are the organizer agent for video question answering. Independent modality agents have"
    " analyzed the video; you aggregate their reports, resolve conflicts, and determine the final"
    " answer.";

// Model-driven aggregation. An unmatched answer falls back to majority
// vote, recorded in policy_id; the verdict index is always valid.
inline Verdict organize_model(const QuestionRecord& question,
                              const std::vector<AgentReport>& reports, ModelBackend& backend,
                              const ModalityRanking& fallback_ranking = default_ranking()) {
    if (reports.empty()) throw EmptyRunError("organizer needs at least one report");
    ChatRequest request;
    request.messages.push_back({Role::System, kOrganizerSystemPrompt, {}, ""});
    request.messages.push_back({Role::User, organizer_report_prompt(question, reports), {}, ""});

    Verdict verdict;
    verdict.reports = reports;
    std::string answer_text;
    try {
        const ModelTurnWire wire = backend.complete(request);
        if (!wire.is_text()) throw UnmatchableAnswerError("organizer returned a tool call");
        answer_text = *wire.text;
        if (auto index = match_option(answer_text, question.options)) {
            verdict.final = *index;
            verdict.justification = answer_text;
            verdict.policy_id = "model";
            return verdict;
        }
    } catch (const UnmatchableAnswerError&) {
    } catch (const BackendFailureError&) {
        answer_text = "(organizer backend failed)";
    }
    const PolicyDecision fallback = majority_decision(reports, fallback_ranking);
    verdict.final = fallback.option;
    verdict.justification = "organizer answer not matchable to an option (" + answer_text +
                            "); fell back to majority vote";
    verdict.policy_id = "model_fallback:" + fallback.rule_id;
    return verdict;
}

}  // namespace mavqa
