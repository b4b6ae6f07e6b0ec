#pragma once

// Remote chat-completions client plus the backend factory. Split from
// backends.hpp so translation units that never talk HTTP skip httplib.

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <thread>

#include "mavqa/backends.hpp"

namespace mavqa {

namespace detail {

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading path, no trailing slash
};

inline ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must include scheme: " + endpoint);
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    ParsedEndpoint out;
    if (path_start == std::string::npos) {
        out.base = endpoint;
    } else {
        out.base = endpoint.substr(0, path_start);
        out.path = endpoint.substr(path_start);
        while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    }
    return out;
}

inline std::string base64_encode(const std::string& bytes) {
    static constexpr char table[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(table[(v >> 6) & 63]);
        out.push_back(table[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(table[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::string data_url_for(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BackendFailureError("cannot read media file: " + path, false);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string mime = "image/jpeg";
    if (path.size() >= 4 && strings::to_lower(path.substr(path.size() - 4)) == ".png") {
        mime = "image/png";
    }
    return "data:" + mime + ";base64," + base64_encode(bytes);
}

}  // namespace detail

// Chat-completions JSON-over-HTTP client. Media is attached as base64
// image parts; temperature is passed through (0 for evaluation runs).
class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty()) {
            const char* env = std::getenv("MAVQA_ENDPOINT");
            if (env) config_.endpoint = env;
        }
        if (config_.endpoint.empty()) {
            throw ConfigError("remote backend '" + config_.backend_id +
                              "' has no endpoint (set config or MAVQA_ENDPOINT)");
        }
    }

    ModelTurnWire complete(const ChatRequest& request) override {
        const json body = request_body(request);
        const auto ep = detail::parse_endpoint(config_.endpoint);
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                auto delay = config_.backoff_initial_s * static_cast<double>(1 << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            httplib::Client client(ep.base);
            client.set_connection_timeout(config_.timeout_s, 0);
            client.set_read_timeout(config_.timeout_s, 0);
            httplib::Headers headers;
            const std::string key = api_key();
            if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
            auto res = client.Post(ep.path + "/chat/completions", headers, body.dump(),
                                   "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "http " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw BackendFailureError("backend '" + config_.backend_id + "' http " +
                                              std::to_string(res->status) + ": " + res->body,
                                          false);
            }
            return parse_response(res->body);
        }
        throw BackendFailureError("backend '" + config_.backend_id + "' failed after " +
                                      std::to_string(config_.retries + 1) + " attempts: " +
                                      last_error,
                                  true);
    }

    std::string id() const override { return config_.backend_id; }

private:
    std::string api_key() const {
        if (config_.api_key_env.empty()) return "";
        const char* v = std::getenv(config_.api_key_env.c_str());
        return v ? v : "";
    }

    json request_body(const ChatRequest& request) const {
        json messages = json::array();
        int call_counter = 0;
        std::string last_call_id;
        for (const auto& m : request.messages) {
            json jm{{"role", to_string(m.role)}};
            // An assistant message carrying a tool name is a tool request:
            // content holds the arguments. Tool messages answer the most
            // recent request.
            if (m.role == Role::Assistant && !m.tool_name.empty()) {
                last_call_id = "call_" + std::to_string(++call_counter);
                jm["content"] = nullptr;
                jm["tool_calls"] = json::array(
                    {json{{"id", last_call_id},
                          {"type", "function"},
                          {"function", {{"name", m.tool_name}, {"arguments", m.content}}}}});
                messages.push_back(std::move(jm));
                continue;
            }
            if (m.role == Role::Tool) {
                jm["content"] = m.content;
                if (!last_call_id.empty()) jm["tool_call_id"] = last_call_id;
                if (!m.tool_name.empty()) jm["name"] = m.tool_name;
                messages.push_back(std::move(jm));
                continue;
            }
            if (m.media.empty()) {
                jm["content"] = m.content;
            } else {
                json parts = json::array();
                parts.push_back(json{{"type", "text"}, {"text", m.content}});
                for (const auto& ref : m.media) {
                    parts.push_back(json{{"type", "image_url"},
                                         {"image_url", {{"url", detail::data_url_for(ref.path)}}}});
                }
                jm["content"] = std::move(parts);
            }
            messages.push_back(std::move(jm));
        }
        json body{{"model", request.model_id.empty() ? config_.model_id : request.model_id},
                  {"messages", std::move(messages)},
                  {"temperature", request.temperature}};
        if (!request.tools.empty()) {
            json tools = json::array();
            for (const auto& t : request.tools) {
                tools.push_back(json{{"type", "function"},
                                     {"function",
                                      {{"name", t.name},
                                       {"description", t.description},
                                       {"parameters", t.parameters}}}});
            }
            body["tools"] = std::move(tools);
        }
        return body;
    }

    ModelTurnWire parse_response(const std::string& body) const {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception& e) {
            throw BackendFailureError("unparseable response from '" + config_.backend_id +
                                          "': " + e.what(),
                                      false);
        }
        if (!j.contains("choices") || j["choices"].empty()) {
            throw BackendFailureError("response without choices from '" + config_.backend_id + "'",
                                      false);
        }
        const json& msg = j["choices"][0]["message"];
        if (msg.contains("tool_calls") && !msg["tool_calls"].empty()) {
            const json& fn = msg["tool_calls"][0]["function"];
            return ModelTurnWire::from_tool_call(fn.at("name").get<std::string>(),
                                                 fn.value("arguments", std::string("{}")));
        }
        if (msg.contains("content") && !msg["content"].is_null()) {
            return ModelTurnWire::from_text(msg["content"].get<std::string>());
        }
        throw BackendFailureError("response with neither content nor tool_calls from '" +
                                      config_.backend_id + "'",
                                  false);
    }

    BackendConfig config_;
};

inline std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config) {
    switch (config.kind) {
        case BackendKind::Remote:
            return std::make_shared<HttpBackend>(config);
        case BackendKind::Mock:
            return std::make_shared<FnBackend>(config.backend_id,
                                               [reply = config.mock_reply](const ChatRequest&) {
                                                   return ModelTurnWire::from_text(reply);
                                               });
        case BackendKind::Replay: {
            if (config.cassette.empty()) {
                throw ConfigError("replay backend '" + config.backend_id + "' needs a cassette");
            }
            auto cassette = std::make_shared<Cassette>(config.cassette);
            return std::make_shared<ReplayBackend>(config.backend_id, std::move(cassette));
        }
        case BackendKind::Record: {
            if (config.cassette.empty()) {
                throw ConfigError("record backend '" + config.backend_id + "' needs a cassette");
            }
            auto cassette = std::make_shared<Cassette>(config.cassette);
            auto inner = std::make_shared<HttpBackend>(config);
            return std::make_shared<RecordBackend>(std::move(inner), std::move(cassette));
        }
    }
    throw ConfigError("unhandled backend kind");
}

}  // namespace mavqa
