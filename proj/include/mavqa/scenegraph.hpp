#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mavqa/backends.hpp"
#include "mavqa/captioning.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/strings.hpp"

namespace mavqa {

// ── triplets & graphs ───────────────────────────────────────────

// Time resolution is the chunk span; finer timing is never assigned.
struct Triplet {
    std::string subject;
    std::string relation;
    std::string object;
    TimeSpan span;

    bool operator==(const Triplet& other) const {
        return subject == other.subject && relation == other.relation && object == other.object &&
               span.start == other.span.start && span.end == other.span.end;
    }
};

struct SceneGraph {
    int chunk_index = 0;
    TimeSpan span;
    std::vector<Triplet> triplets;
    std::optional<int> prev_chunk;  // always chunk_index - 1 when present
};

// Inclusive caption-index range.
struct IndexRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t count() const { return last - first + 1; }
    bool operator==(const IndexRange&) const = default;
};

// Contiguous, non-overlapping ranges partitioning [0, caption_count).
using ChunkPlan = std::vector<IndexRange>;

// ── chunking ────────────────────────────────────────────────────

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Greedy left-to-right: a caption joins the current chunk iff the
// token-set Jaccard similarity against the chunk's first caption is at
// least `threshold`; otherwise it starts a new chunk.
inline ChunkPlan chunk_by_similarity(const std::vector<Caption>& captions,
                                     double threshold = 0.3) {
    if (captions.empty()) throw Error("chunk_by_similarity needs at least one caption");
    ChunkPlan plan;
    std::set<std::string> anchor_tokens = strings::token_set(captions[0].text);
    plan.push_back({0, 0});
    for (std::size_t i = 1; i < captions.size(); ++i) {
        const auto tokens = strings::token_set(captions[i].text);
        if (jaccard(tokens, anchor_tokens) >= threshold) {
            plan.back().last = i;
        } else {
            plan.push_back({i, i});
            anchor_tokens = std::move(tokens);
        }
    }
    return plan;
}

// ── prompts & parsing ───────────────────────────────────────────

inline std::string serialize_triplet(const Triplet& t) {
    return "(" + t.subject + ", " + t.relation + ", " + t.object + ")";
}

inline std::string serialize_triplets(const std::vector<Triplet>& triplets) {
    std::string out;
    for (const auto& t : triplets) {
        out += serialize_triplet(t);
        out += "\n";
    }
    return out;
}

inline constexpr const char* kContinuityHeader =
    "Continuing from the previous segment's scene graph:";

// The prompt lists every chunk caption with its time span; when a prior
// graph exists its triplets are included under the continuity header.
inline std::string build_graph_prompt(const std::vector<Caption>& chunk_captions,
                                      const SceneGraph* prev = nullptr) {
    if (chunk_captions.empty()) throw Error("build_graph_prompt needs at least one caption");
    const double t0 = chunk_captions.front().window.start_seconds();
    const double t1 = chunk_captions.back().window.end_seconds();
    std::string prompt = "Build a scene graph for a video segment covering seconds " +
                         strings::format_number(t0) + " to " + strings::format_number(t1) +
                         ".\nCaptions for this segment:\n";
    for (const auto& c : chunk_captions) {
        prompt += "- [" + strings::format_number(c.window.start_seconds()) + "s-" +
                  strings::format_number(c.window.end_seconds()) + "s] " + c.text + "\n";
    }
    if (prev != nullptr) {
        prompt += std::string(kContinuityHeader) + "\n" + serialize_triplets(prev->triplets);
    }
    prompt += "Extract subject-relation-object triplets for the objects, characters, and key"
              " entities in the segment and their relationships and actions."
              " Output exactly one (subject, relation, object) per line, parenthesized and"
              " comma-separated, with nothing else.";
    return prompt;
}

// Strict one-per-line wire format: `(subject, relation, object)`.
// Blank lines are skipped; anything else is an error, so backend output
// regressions surface instead of being silently dropped.
inline std::vector<Triplet> parse_triplets(const std::string& model_output, TimeSpan chunk_span) {
    static const std::regex line_pattern(R"(^\s*\(([^,()]+),([^,()]+),([^,()]+)\)\s*$)");
    std::vector<Triplet> triplets;
    std::istringstream in(model_output);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strings::trim(line).empty()) continue;
        std::smatch m;
        if (!std::regex_match(line, m, line_pattern)) {
            throw MalformedTripletError(line_no, strings::trim(line));
        }
        Triplet t;
        t.subject = strings::trim(m[1].str());
        t.relation = strings::trim(m[2].str());
        t.object = strings::trim(m[3].str());
        if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
            throw MalformedTripletError(line_no, strings::trim(line));
        }
        t.span = chunk_span;
        triplets.push_back(std::move(t));
    }
    return triplets;
}

// ── queries ─────────────────────────────────────────────────────

// Triplets whose span intersects [t0, t1], in chunk order.
inline std::vector<Triplet> triplets_in_range(const std::vector<SceneGraph>& graphs, double t0,
                                              double t1) {
    if (t0 > t1) throw InvalidSpanError("query span has t0 > t1");
    const TimeSpan query{t0, t1};
    std::vector<Triplet> out;
    for (const auto& g : graphs) {
        for (const auto& t : g.triplets) {
            if (t.span.intersects(query)) out.push_back(t);
        }
    }
    return out;
}

// Triplets whose subject or object equals the label after case-folding.
inline std::vector<Triplet> triplets_with_entity(const std::vector<SceneGraph>& graphs,
                                                 const std::string& label) {
    const std::string folded = strings::to_lower(strings::trim(label));
    std::vector<Triplet> out;
    for (const auto& g : graphs) {
        for (const auto& t : g.triplets) {
            if (strings::to_lower(t.subject) == folded || strings::to_lower(t.object) == folded) {
                out.push_back(t);
            }
        }
    }
    return out;
}

// ── build pipeline ──────────────────────────────────────────────

// Sequential across chunks: each new graph references the previous one.
inline std::vector<SceneGraph> build_scene_graphs(const std::vector<Caption>& captions,
                                                  ModelBackend& backend,
                                                  double threshold = 0.3) {
    if (captions.empty()) throw NoGraphsError("cannot build scene graphs without captions");
    const ChunkPlan plan = chunk_by_similarity(captions, threshold);
    std::vector<SceneGraph> graphs;
    graphs.reserve(plan.size());
    for (std::size_t ci = 0; ci < plan.size(); ++ci) {
        const std::vector<Caption> chunk(captions.begin() + static_cast<long>(plan[ci].first),
                                         captions.begin() + static_cast<long>(plan[ci].last) + 1);
        const SceneGraph* prev = graphs.empty() ? nullptr : &graphs.back();
        ChatRequest request;
        request.messages.push_back({Role::User, build_graph_prompt(chunk, prev), {}, ""});
        ModelTurnWire turn = backend.complete(request);
        if (!turn.is_text()) {
            throw BackendFailureError("graph backend returned a non-text turn for chunk " +
                                          std::to_string(ci),
                                      false);
        }
        SceneGraph g;
        g.chunk_index = static_cast<int>(ci);
        g.span = {chunk.front().window.start_seconds(), chunk.back().window.end_seconds()};
        g.triplets = parse_triplets(*turn.text, g.span);
        if (ci > 0) g.prev_chunk = static_cast<int>(ci) - 1;
        graphs.push_back(std::move(g));
    }
    return graphs;
}

// ── graph store ─────────────────────────────────────────────────

// File-backed store keyed by video id, one JSON record per chunk:
//   {"video_id":..., "chunk_index":..., "span":[t0,t1],
//    "triplets":[[subject,relation,object],...]}
class SceneGraphStore {
public:
    SceneGraphStore() = default;

    explicit SceneGraphStore(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (strings::trim(line).empty()) continue;
            json j = json::parse(line);
            SceneGraph g;
            g.chunk_index = j.at("chunk_index").get<int>();
            g.span = {j.at("span").at(0).get<double>(), j.at("span").at(1).get<double>()};
            for (const auto& jt : j.at("triplets")) {
                g.triplets.push_back({jt.at(0).get<std::string>(), jt.at(1).get<std::string>(),
                                      jt.at(2).get<std::string>(), g.span});
            }
            if (g.chunk_index > 0) g.prev_chunk = g.chunk_index - 1;
            cache_[j.at("video_id").get<std::string>()].push_back(std::move(g));
        }
    }

    std::optional<std::vector<SceneGraph>> find(const std::string& video_id) const {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(video_id);
        if (it == cache_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& video_id, const std::vector<SceneGraph>& graphs) {
        std::lock_guard lock(mutex_);
        put_locked(video_id, graphs);
    }

    template <typename Generator>
    std::vector<SceneGraph> ensure(const std::string& video_id, Generator&& generate) {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(video_id);
        if (it != cache_.end()) return it->second;
        std::vector<SceneGraph> graphs = generate();
        put_locked(video_id, graphs);
        return graphs;
    }

private:
    void put_locked(const std::string& video_id, const std::vector<SceneGraph>& graphs) {
        cache_[video_id] = graphs;
        if (path_.empty()) return;
        std::filesystem::path p(path_);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to graph store: " + path_);
        for (const auto& g : graphs) {
            json triplets = json::array();
            for (const auto& t : g.triplets) {
                triplets.push_back({t.subject, t.relation, t.object});
            }
            json j{{"video_id", video_id},
                   {"chunk_index", g.chunk_index},
                   {"span", {g.span.start, g.span.end}},
                   {"triplets", std::move(triplets)}};
            out << dump_stable(j) << "\n";
        }
    }

    std::string path_;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<SceneGraph>> cache_;
};

}  // namespace mavqa
