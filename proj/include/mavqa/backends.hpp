#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mavqa/digest.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/strings.hpp"

namespace mavqa {

using json = nlohmann::json;

inline std::string dump_stable(const json& j) {
    // nlohmann objects are key-sorted maps, so dump() is deterministic.
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ── chat wire types ─────────────────────────────────────────────

enum class Role { System, User, Assistant, Tool };

inline std::string to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

inline Role role_from_string(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    if (s == "tool") return Role::Tool;
    throw ConfigError("unknown role: " + std::string(s));
}

// A media attachment referenced by file path. Canonical forms identify
// media by content digest, never by path.
struct MediaRef {
    std::string path;
};

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    std::vector<MediaRef> media;
    std::string tool_name;  // set when role == Tool
};

struct ToolSchema {
    std::string name;
    std::string description;
    json parameters;  // JSON-schema "parameters" object
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    std::vector<ToolSchema> tools;
    double temperature = 0.0;
};

// Exactly one of text / tool_call is populated.
struct ModelTurnWire {
    std::optional<std::string> text;
    struct ToolCallWire {
        std::string name;
        std::string arguments_json;
    };
    std::optional<ToolCallWire> tool_call;

    bool is_text() const { return text.has_value(); }
    bool is_tool_call() const { return tool_call.has_value(); }

    static ModelTurnWire from_text(std::string t) {
        ModelTurnWire w;
        w.text = std::move(t);
        return w;
    }
    static ModelTurnWire from_tool_call(std::string name, std::string arguments_json) {
        ModelTurnWire w;
        w.tool_call = ToolCallWire{std::move(name), std::move(arguments_json)};
        return w;
    }
};

inline json to_json(const ModelTurnWire& w) {
    if (w.is_tool_call()) {
        return json{{"type", "tool_call"},
                    {"name", w.tool_call->name},
                    {"arguments", w.tool_call->arguments_json}};
    }
    return json{{"type", "text"}, {"content", w.text.value_or("")}};
}

inline ModelTurnWire turn_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "tool_call") {
        return ModelTurnWire::from_tool_call(j.at("name").get<std::string>(),
                                             j.at("arguments").get<std::string>());
    }
    if (type == "text") return ModelTurnWire::from_text(j.at("content").get<std::string>());
    throw ConfigError("unknown turn type: " + type);
}

// ── canonicalization ────────────────────────────────────────────

// Deterministic serialization of a request: sorted keys, fixed fields,
// media replaced by content digests. The cassette key is the sha256 of
// this canonical byte string.
inline json canonical_request_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        json jm{{"role", to_string(m.role)}, {"content", m.content}};
        if (!m.tool_name.empty()) jm["tool"] = m.tool_name;
        if (!m.media.empty()) {
            json media = json::array();
            for (const auto& ref : m.media) media.push_back("sha256:" + sha256_file(ref.path));
            jm["media"] = media;
        }
        messages.push_back(std::move(jm));
    }
    json out{{"model_id", request.model_id},
             {"messages", std::move(messages)},
             {"temperature", request.temperature}};
    if (!request.tools.empty()) {
        json tools = json::array();
        for (const auto& t : request.tools) {
            tools.push_back(json{{"name", t.name},
                                 {"description", t.description},
                                 {"parameters", t.parameters}});
        }
        out["tools"] = std::move(tools);
    }
    return out;
}

inline std::string canonicalize(const ChatRequest& request) {
    return dump_stable(canonical_request_json(request));
}

inline std::string request_key(const ChatRequest& request) {
    return sha256_hex(canonicalize(request));
}

// ── backend interface ───────────────────────────────────────────

// Uniform model access. Implementations must be safe for concurrent
// complete() calls.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual ModelTurnWire complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

// Computes the reply from the request; the workhorse behind scripted mocks.
class FnBackend : public ModelBackend {
public:
    using Fn = std::function<ModelTurnWire(const ChatRequest&)>;

    FnBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

    ModelTurnWire complete(const ChatRequest& request) override { return fn_(request); }
    std::string id() const override { return id_; }

private:
    std::string id_;
    Fn fn_;
};

// Replays a fixed sequence of turns regardless of request content.
class ScriptedBackend : public ModelBackend {
public:
    ScriptedBackend(std::string id, std::vector<ModelTurnWire> script)
        : id_(std::move(id)), script_(script.begin(), script.end()) {}

    ModelTurnWire complete(const ChatRequest&) override {
        std::lock_guard lock(mutex_);
        if (script_.empty()) {
            throw BackendFailureError("scripted backend '" + id_ + "' exhausted", false);
        }
        ModelTurnWire turn = std::move(script_.front());
        script_.pop_front();
        return turn;
    }
    std::string id() const override { return id_; }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        return script_.size();
    }

private:
    std::string id_;
    mutable std::mutex mutex_;
    std::deque<ModelTurnWire> script_;
};

// Responds by canonical request key; unknown keys fail.
class KeyedBackend : public ModelBackend {
public:
    KeyedBackend(std::string id, std::unordered_map<std::string, ModelTurnWire> table)
        : id_(std::move(id)), table_(std::move(table)) {}

    ModelTurnWire complete(const ChatRequest& request) override {
        const std::string key = request_key(request);
        auto it = table_.find(key);
        if (it == table_.end()) {
            throw BackendFailureError("keyed mock '" + id_ + "' has no entry for key " + key,
                                      false);
        }
        return it->second;
    }
    std::string id() const override { return id_; }

private:
    std::string id_;
    std::unordered_map<std::string, ModelTurnWire> table_;
};

// Counts calls through to an inner backend; test instrumentation.
class CountingBackend : public ModelBackend {
public:
    explicit CountingBackend(std::shared_ptr<ModelBackend> inner) : inner_(std::move(inner)) {}

    ModelTurnWire complete(const ChatRequest& request) override {
        {
            std::lock_guard lock(mutex_);
            ++calls_;
        }
        return inner_->complete(request);
    }
    std::string id() const override { return inner_->id(); }

    int calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    std::shared_ptr<ModelBackend> inner_;
    mutable std::mutex mutex_;
    int calls_ = 0;
};

// ── cassettes ───────────────────────────────────────────────────

struct CassetteRecord {
    std::string key;
    json request;  // canonical request json
    ModelTurnWire response;
    std::string backend_id;
};

// Content-addressed store of request/response pairs, one JSON record per
// line. Reads are lock-free after load; appends are serialized.
class Cassette {
public:
    Cassette() = default;

    // Loads the file if it exists; an absent file is an empty cassette.
    explicit Cassette(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (strings::trim(line).empty()) continue;
            json j = json::parse(line);
            const std::string key = j.at("key").get<std::string>();
            if (entries_.count(key)) {
                throw ConfigError("duplicate cassette key at " + path_ + ":" +
                                  std::to_string(line_no) + ": " + key);
            }
            entries_.emplace(key, turn_from_json(j.at("response")));
        }
    }

    bool contains(const std::string& key) const { return entries_.count(key) > 0; }

    ModelTurnWire at(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw CassetteMissError(key);
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }

    // Appends to memory and to the backing file (if any).
    void append(const CassetteRecord& record) {
        std::lock_guard lock(write_mutex_);
        if (entries_.count(record.key)) return;
        entries_.emplace(record.key, record.response);
        if (path_.empty()) return;
        std::filesystem::path p(path_);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to cassette: " + path_);
        json j{{"key", record.key},
               {"request", record.request},
               {"response", to_json(record.response)},
               {"backend_id", record.backend_id}};
        out << dump_stable(j) << "\n";
    }

private:
    std::string path_;
    std::unordered_map<std::string, ModelTurnWire> entries_;
    std::mutex write_mutex_;
};

// Pure replay: every request must hit the cassette. Guarantees zero
// network activity.
class ReplayBackend : public ModelBackend {
public:
    ReplayBackend(std::string id, std::shared_ptr<Cassette> cassette)
        : id_(std::move(id)), cassette_(std::move(cassette)) {}

    ModelTurnWire complete(const ChatRequest& request) override {
        return cassette_->at(request_key(request));
    }
    std::string id() const override { return id_; }

private:
    std::string id_;
    std::shared_ptr<Cassette> cassette_;
};

// Record-through: cassette hits are served locally, misses go to the
// inner backend and are persisted.
class RecordBackend : public ModelBackend {
public:
    RecordBackend(std::shared_ptr<ModelBackend> inner, std::shared_ptr<Cassette> cassette)
        : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

    ModelTurnWire complete(const ChatRequest& request) override {
        const std::string key = request_key(request);
        if (cassette_->contains(key)) return cassette_->at(key);
        ModelTurnWire response = inner_->complete(request);
        cassette_->append({key, canonical_request_json(request), response, inner_->id()});
        return response;
    }
    std::string id() const override { return inner_->id(); }

private:
    std::shared_ptr<ModelBackend> inner_;
    std::shared_ptr<Cassette> cassette_;
};

// ── configuration & registry ────────────────────────────────────

enum class BackendKind { Remote, Mock, Replay, Record };

inline BackendKind backend_kind_from_string(std::string_view s) {
    const std::string u = strings::to_lower(s);
    if (u == "remote") return BackendKind::Remote;
    if (u == "mock") return BackendKind::Mock;
    if (u == "replay") return BackendKind::Replay;
    if (u == "record") return BackendKind::Record;
    throw ConfigError("unknown backend kind: " + std::string(s));
}

inline std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Remote: return "remote";
        case BackendKind::Mock: return "mock";
        case BackendKind::Replay: return "replay";
        case BackendKind::Record: return "record";
    }
    return "remote";
}

struct BackendConfig {
    std::string backend_id;
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;                       // remote/record: chat-completions base URL
    std::string model_id;
    std::string cassette;                       // replay/record: cassette file path
    std::string api_key_env = "MAVQA_API_KEY";  // env var holding the key
    std::string mock_reply = "A";               // mock kind: fixed text reply
    int retries = 3;
    double backoff_initial_s = 0.5;
    int timeout_s = 120;
};

class BackendRegistry {
public:
    void add(std::string backend_id, std::shared_ptr<ModelBackend> backend) {
        backends_[std::move(backend_id)] = std::move(backend);
    }

    ModelBackend& get(const std::string& backend_id) const {
        auto it = backends_.find(backend_id);
        if (it == backends_.end()) throw ConfigError("unknown backend id: " + backend_id);
        return *it->second;
    }

    std::shared_ptr<ModelBackend> get_shared(const std::string& backend_id) const {
        auto it = backends_.find(backend_id);
        if (it == backends_.end()) throw ConfigError("unknown backend id: " + backend_id);
        return it->second;
    }

    bool has(const std::string& backend_id) const { return backends_.count(backend_id) > 0; }

private:
    std::map<std::string, std::shared_ptr<ModelBackend>> backends_;
};

}  // namespace mavqa
