#pragma once

#include <nlohmann/json.hpp>

#include "mavqa/core.hpp"

namespace mavqa {

inline json to_json(const EvidenceItem& e) {
    json j{{"kind", to_string(e.kind)}, {"content", e.content}};
    if (e.time_span) j["time_span"] = {e.time_span->start, e.time_span->end};
    return j;
}

inline EvidenceItem evidence_from_json(const json& j) {
    EvidenceItem e;
    const std::string kind = j.value("kind", std::string("caption"));
    if (kind == "triplet") {
        e.kind = EvidenceKind::Triplet;
    } else if (kind == "video") {
        e.kind = EvidenceKind::VideoObservation;
    } else {
        e.kind = EvidenceKind::CaptionRef;
    }
    e.content = j.value("content", std::string());
    if (j.contains("time_span") && j["time_span"].is_array() && j["time_span"].size() == 2) {
        e.time_span = TimeSpan{j["time_span"][0].get<double>(), j["time_span"][1].get<double>()};
    }
    return e;
}

inline json to_json(const AgentReport& r) {
    json evidence = json::array();
    for (const auto& e : r.evidence) evidence.push_back(to_json(e));
    return json{{"modality", to_string(r.modality)},
                {"chosen", r.chosen},
                {"rationale", r.rationale},
                {"evidence", std::move(evidence)},
                {"tool_calls_used", r.tool_calls_used}};
}

inline AgentReport report_from_json(const json& j) {
    AgentReport r;
    r.modality = modality_from_string(j.at("modality").get<std::string>());
    r.chosen = j.at("chosen").get<int>();
    r.rationale = j.value("rationale", std::string());
    r.tool_calls_used = j.value("tool_calls_used", 0);
    if (j.contains("evidence")) {
        for (const auto& e : j["evidence"]) r.evidence.push_back(evidence_from_json(e));
    }
    return r;
}

inline json to_json(const Verdict& v) {
    return json{{"final", v.final}, {"justification", v.justification}, {"policy_id", v.policy_id}};
}

inline Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.final = j.at("final").get<int>();
    v.justification = j.value("justification", std::string());
    v.policy_id = j.value("policy_id", std::string());
    return v;
}

}  // namespace mavqa
