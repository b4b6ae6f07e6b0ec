#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "mavqa/backends.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/strings.hpp"

namespace mavqa {

// ── frame windows ───────────────────────────────────────────────

// Inclusive frame index range. Frame i sits at t = i / fps seconds;
// the benchmark convention is 1 fps.
struct FrameWindow {
    int start_frame = 0;
    int end_frame = 0;
    int fps = 1;

    int frame_count() const { return end_frame - start_frame + 1; }
    double start_seconds() const { return static_cast<double>(start_frame) / fps; }
    double end_seconds() const { return static_cast<double>(end_frame) / fps; }
    TimeSpan span() const { return {start_seconds(), end_seconds()}; }

    bool operator==(const FrameWindow&) const = default;
};

struct CaptionPlanOptions {
    int window_size = 5;
    int overlap = 1;
    int fps = 1;
};

// Windows start every (window_size - overlap) frames and are clipped to
// the frame range. A tail shorter than 2 frames merges into the previous
// window so every caption spans at least 2 frames.
inline std::vector<FrameWindow> plan_windows(int frame_count, int window_size = 5,
                                             int overlap = 1, int fps = 1) {
    if (window_size < 2) throw InvalidWindowConfigError("window_size must be >= 2");
    if (overlap < 0 || overlap >= window_size) {
        throw InvalidWindowConfigError("overlap must satisfy 0 <= overlap < window_size");
    }
    if (frame_count < 1) throw InvalidWindowConfigError("frame_count must be >= 1");
    if (fps < 1) throw InvalidWindowConfigError("fps must be >= 1");

    const int stride = window_size - overlap;
    std::vector<FrameWindow> windows;
    for (int start = 0;; start += stride) {
        const int end = std::min(start + window_size - 1, frame_count - 1);
        windows.push_back({start, end, fps});
        if (end == frame_count - 1) break;
    }
    if (windows.size() >= 2 && windows.back().frame_count() < 2) {
        const FrameWindow tail = windows.back();
        windows.pop_back();
        windows.back().end_frame = tail.end_frame;
    }
    return windows;
}

// ── keywords ────────────────────────────────────────────────────

// Ordered, deduplicated, lowercase keywords.
using KeywordSet = std::vector<std::string>;

// Closed stopword list: articles, pronouns, auxiliaries, prepositions,
// conjunctions, question words. Tokens shorter than 2 chars are dropped
// before this list is consulted.
inline const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "the", "an", "and", "or", "but", "if", "then", "than", "so", "as", "not", "no", "nor",
        "too", "very", "just", "also", "only", "both", "each", "few", "more", "most", "other",
        "some", "such", "own", "same", "again", "once", "all", "any", "because", "until",
        "while", "now", "of", "in", "on", "at", "to", "for", "with", "from", "by", "up",
        "down", "out", "off", "over", "under", "into", "onto", "about", "after", "before",
        "between", "during", "through", "above", "below", "near", "across", "around", "behind",
        "beside", "against", "along", "upon", "within", "without", "toward", "towards", "what",
        "when", "where", "which", "who", "whom", "whose", "why", "how", "am", "is", "are",
        "was", "were", "be", "been", "being", "do", "does", "did", "doing", "done", "have",
        "has", "had", "having", "can", "could", "will", "would", "shall", "should", "may",
        "might", "must", "he", "she", "it", "they", "them", "him", "her", "his", "hers",
        "its", "their", "theirs", "you", "your", "yours", "we", "us", "our", "ours", "me",
        "my", "mine", "this", "that", "these", "those", "there", "here"};
    return words;
}

// Question tokens precede option tokens; stopwords and tokens shorter
// than 2 characters are dropped; first occurrence wins.
inline KeywordSet extract_keywords(const std::string& question,
                                   const std::vector<std::string>& options) {
    KeywordSet keywords;
    std::set<std::string> seen;
    auto consume = [&](const std::string& text) {
        for (auto& token : strings::tokenize(text)) {
            if (token.size() < 2) continue;
            if (stopwords().count(token)) continue;
            if (!seen.insert(token).second) continue;
            keywords.push_back(std::move(token));
        }
    };
    consume(question);
    for (const auto& opt : options) consume(opt);
    return keywords;
}

// ── captions ────────────────────────────────────────────────────

struct Caption {
    FrameWindow window;
    std::string text;
    bool question_guided = false;
    KeywordSet keywords_used;
};

// Guided prompts carry every keyword verbatim plus the multi-frame
// temporal instruction; the generic variant is the ablation baseline.
inline std::string build_caption_prompt(const FrameWindow& window, const KeywordSet& keywords,
                                        bool guided) {
    const int n = window.frame_count();
    std::string head = "You are given " + std::to_string(n) +
                       " consecutive video frames sampled at " + std::to_string(window.fps) +
                       " frame(s) per second, covering seconds " +
                       strings::format_number(window.start_seconds()) + " to " +
                       strings::format_number(window.end_seconds()) + " of the video.";
    if (!guided) {
        return head + " Describe the frames in one concise caption, no preamble.";
    }
    std::string prompt = head +
                         " Process all frames together and capture temporal information: describe"
                         " the actions and objects across the whole span, how actions evolve, and"
                         " what changes between the first and last frame.";
    if (!keywords.empty()) {
        prompt += " Pay particular attention to these keywords drawn from the question and its"
                  " answer options: " +
                  strings::join(keywords, ", ") +
                  ". Mention each keyword that is visible or relevant.";
    }
    prompt += " One concise caption, no preamble.";
    return prompt;
}

// Frame files named frame_%06d.jpg/.png, index 0 at t=0 s. Returns full
// paths sorted by frame index.
inline std::vector<std::string> list_frames(const std::string& frames_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(frames_dir)) {
        throw NoCaptionsError("frame directory not found: " + frames_dir);
    }
    static const std::regex pattern(R"(frame_(\d{6})\.(jpg|jpeg|png))",
                                    std::regex::ECMAScript | std::regex::icase);
    std::vector<std::pair<int, std::string>> indexed;
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, pattern)) continue;
        indexed.emplace_back(std::stoi(m[1].str()), entry.path().string());
    }
    std::sort(indexed.begin(), indexed.end());
    std::vector<std::string> paths;
    paths.reserve(indexed.size());
    for (auto& [idx, path] : indexed) paths.push_back(std::move(path));
    return paths;
}

// One caption per planned window, in window order. Each backend call
// attaches the window's frames and the built prompt.
inline std::vector<Caption> caption_video(const std::string& frames_dir,
                                          const QuestionRecord& question, ModelBackend& backend,
                                          bool guided,
                                          const CaptionPlanOptions& opts = {}) {
    const auto frames = list_frames(frames_dir);
    if (frames.empty()) throw NoCaptionsError("no frames in " + frames_dir);

    const auto windows = plan_windows(static_cast<int>(frames.size()), opts.window_size,
                                      opts.overlap, opts.fps);
    const KeywordSet keywords =
        guided ? extract_keywords(question.question, question.options) : KeywordSet{};

    std::vector<Caption> captions;
    captions.reserve(windows.size());
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const FrameWindow& window = windows[wi];
        ChatMessage msg;
        msg.role = Role::User;
        msg.content = build_caption_prompt(window, keywords, guided);
        for (int f = window.start_frame; f <= window.end_frame; ++f) {
            msg.media.push_back({frames[static_cast<std::size_t>(f)]});
        }
        ChatRequest request;
        request.messages.push_back(std::move(msg));
        ModelTurnWire turn;
        try {
            turn = backend.complete(request);
        } catch (const BackendFailureError& e) {
            throw BackendFailureError("captioning window " + std::to_string(wi) + " failed: " +
                                          e.what(),
                                      e.retryable, static_cast<int>(wi));
        }
        if (!turn.is_text() || strings::trim(*turn.text).empty()) {
            throw BackendFailureError("captioner returned no text for window " +
                                          std::to_string(wi),
                                      false, static_cast<int>(wi));
        }
        captions.push_back({window, strings::trim(*turn.text), guided, keywords});
    }
    return captions;
}

// ── caption cache ───────────────────────────────────────────────

inline constexpr const char* kGenericCaptionKey = "generic";

// File-backed cache, one JSON record per line:
//   {"video_id":..., "question_id":... ("generic" for unguided),
//    "window":[start,end], "text":...}
// Guided captions key on (video_id, question_id), generic ones on video_id.
class CaptionStore {
public:
    CaptionStore() = default;

    explicit CaptionStore(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (strings::trim(line).empty()) continue;
            json j = json::parse(line);
            const std::string video = j.at("video_id").get<std::string>();
            const std::string qid = j.at("question_id").get<std::string>();
            Caption c;
            c.window = {j.at("window").at(0).get<int>(), j.at("window").at(1).get<int>(), 1};
            c.text = j.at("text").get<std::string>();
            c.question_guided = qid != kGenericCaptionKey;
            cache_[cache_key(video, qid)].push_back(std::move(c));
        }
    }

    std::optional<std::vector<Caption>> find(const std::string& video_id,
                                             const std::string& question_id) const {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(cache_key(video_id, question_id));
        if (it == cache_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& video_id, const std::string& question_id,
             const std::vector<Caption>& captions) {
        std::lock_guard lock(mutex_);
        put_locked(video_id, question_id, captions);
    }

    // Generate-once: concurrent callers block until the first generation
    // finishes, then share the cached result.
    template <typename Generator>
    std::vector<Caption> ensure(const std::string& video_id, const std::string& question_id,
                                Generator&& generate) {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(cache_key(video_id, question_id));
        if (it != cache_.end()) return it->second;
        std::vector<Caption> captions = generate();
        put_locked(video_id, question_id, captions);
        return captions;
    }

private:
    static std::string cache_key(const std::string& video_id, const std::string& question_id) {
        return video_id + "\x1f" + question_id;
    }

    void put_locked(const std::string& video_id, const std::string& question_id,
                    const std::vector<Caption>& captions) {
        cache_[cache_key(video_id, question_id)] = captions;
        if (path_.empty()) return;
        std::filesystem::path p(path_);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to caption cache: " + path_);
        for (const auto& c : captions) {
            json j{{"video_id", video_id},
                   {"question_id", question_id},
                   {"window", {c.window.start_frame, c.window.end_frame}},
                   {"text", c.text}};
            out << dump_stable(j) << "\n";
        }
    }

    std::string path_;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<Caption>> cache_;
};

}  // namespace mavqa
