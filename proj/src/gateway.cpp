#include "lpml/gateway.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <httplib.h>

namespace lpml {

std::string_view to_string(ChatMessage::Role role) {
    switch (role) {
    case ChatMessage::Role::System: return "system";
    case ChatMessage::Role::User: return "user";
    case ChatMessage::Role::Assistant: return "assistant";
    }
    return "system";
}

ChatMessage::Role role_from_string(std::string_view s) {
    if (s == "system") return ChatMessage::Role::System;
    if (s == "user") return ChatMessage::Role::User;
    if (s == "assistant") return ChatMessage::Role::Assistant;
    throw std::invalid_argument("unknown chat role: " + std::string(s));
}

std::string complete(const std::vector<ChatMessage>& history, const CompletionParams& params,
                     Backend& backend) {
    if (history.empty()) throw std::invalid_argument("chat history is empty");
    if (history.front().role != ChatMessage::Role::System)
        throw std::invalid_argument("chat history must start with a system message");
    if (params.temperature < 0.0 || params.temperature > 2.0)
        throw std::invalid_argument("temperature out of range [0, 2]");
    return backend.complete(history, params);
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies, bool repeat_last)
    : replies_(std::move(replies)), repeat_last_(repeat_last) {}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>&, const CompletionParams&) {
    std::lock_guard lock(mutex_);
    ++calls_;
    if (next_ < replies_.size()) return replies_[next_++];
    if (repeat_last_ && !replies_.empty()) return replies_.back();
    throw BackendExhausted("scripted backend: no reply left for call " +
                           std::to_string(calls_));
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
}

} // namespace

std::string request_fingerprint(const std::vector<ChatMessage>& history,
                                const CompletionParams& params) {
    std::uint64_t h = kFnvOffset;
    for (const auto& msg : history) {
        fnv_mix(h, to_string(msg.role));
        fnv_mix(h, "\x1f");
        fnv_mix(h, msg.content);
        fnv_mix(h, "\x1e");
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "temp=%.6f", params.temperature);
    fnv_mix(h, buf);
    fnv_mix(h, "\x1f");
    fnv_mix(h, params.model_id);
    fnv_mix(h, "\x1f");
    fnv_mix(h, params.max_tokens ? std::to_string(*params.max_tokens) : "none");
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string Cassette::to_json() const {
    nlohmann::json entries_json = nlohmann::json::array();
    for (const auto& entry : entries)
        entries_json.push_back({{"fingerprint", entry.fingerprint}, {"response", entry.response}});
    nlohmann::json doc{{"entries", std::move(entries_json)}};
    return doc.dump(2);
}

Cassette Cassette::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw GatewayError(std::string("cassette: invalid json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array())
        throw GatewayError("cassette: missing entries array");
    Cassette cassette;
    for (const auto& item : doc["entries"]) {
        if (!item.is_object() || !item.contains("fingerprint") || !item.contains("response") ||
            !item["fingerprint"].is_string() || !item["response"].is_string())
            throw GatewayError("cassette: malformed entry");
        cassette.entries.push_back(
            {item["fingerprint"].get<std::string>(), item["response"].get<std::string>()});
    }
    return cassette;
}

void Cassette::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw GatewayError("cassette: cannot open for writing: " + path);
    out << to_json() << '\n';
    if (!out.flush()) throw GatewayError("cassette: write failed: " + path);
}

Cassette Cassette::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GatewayError("cassette: cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

ReplayBackend::ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}

std::string ReplayBackend::complete(const std::vector<ChatMessage>& history,
                                    const CompletionParams& params) {
    std::lock_guard lock(mutex_);
    if (next_ >= cassette_.entries.size())
        throw BackendExhausted("replay: cassette has only " +
                               std::to_string(cassette_.entries.size()) + " entries");
    const auto& entry = cassette_.entries[next_];
    std::string got = request_fingerprint(history, params);
    if (got != entry.fingerprint)
        throw FingerprintMismatch("replay: request " + std::to_string(next_) +
                                  " diverged from recording (expected " + entry.fingerprint +
                                  ", got " + got + ")");
    ++next_;
    return entry.response;
}

std::string RecordingBackend::complete(const std::vector<ChatMessage>& history,
                                       const CompletionParams& params) {
    std::string fingerprint = request_fingerprint(history, params);
    std::string response = inner_.complete(history, params);
    std::lock_guard lock(mutex_);
    captured_.entries.push_back({std::move(fingerprint), response});
    return response;
}

Cassette RecordingBackend::cassette() const {
    std::lock_guard lock(mutex_);
    return captured_;
}

std::vector<std::chrono::milliseconds> backoff_schedule(std::uint64_t seed, int tries,
                                                        std::chrono::milliseconds base) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> jitter(0, std::max<std::int64_t>(1, base.count() / 2));
    std::vector<std::chrono::milliseconds> delays;
    for (int i = 0; i + 1 < tries; ++i)
        delays.emplace_back(base.count() * (std::int64_t{1} << i) + jitter(rng));
    return delays;
}

namespace {

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading slash
    bool https = false;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("endpoint url must include a scheme: " + url);
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw std::invalid_argument("unsupported url scheme: " + scheme);
    auto path_begin = url.find('/', scheme_end + 3);
    SplitUrl split;
    split.https = scheme == "https";
    if (path_begin == std::string::npos) {
        split.base = url;
        split.path = "/";
    } else {
        split.base = url.substr(0, path_begin);
        split.path = url.substr(path_begin);
    }
    return split;
}

} // namespace

struct HttpBackend::Impl {
    HttpBackendConfig config;
    SplitUrl url;
    httplib::Client client;
    std::mutex mutex; // httplib clients are not safe for concurrent requests

    explicit Impl(HttpBackendConfig cfg) : config(std::move(cfg)), url(split_url(config.endpoint_url)), client(url.base) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url.https)
            throw TransportError("https endpoint requested but tls support is not compiled in");
#endif
        client.set_connection_timeout(std::chrono::seconds(15));
        client.set_read_timeout(std::chrono::seconds(300));
        client.set_write_timeout(std::chrono::seconds(60));
        if (!config.sleeper)
            config.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
        if (config.max_tries < 1) config.max_tries = 1;
    }

    std::string body_for(const std::vector<ChatMessage>& history, const CompletionParams& params) const {
        nlohmann::json messages = nlohmann::json::array();
        for (std::size_t i = 0; i < history.size(); ++i) {
            std::string role(to_string(history[i].role));
            if (config.system_as_user && i > 0 && history[i].role == ChatMessage::Role::System)
                role = "user";
            messages.push_back({{"role", role}, {"content", history[i].content}});
        }
        nlohmann::json body{
            {"model", params.model_id},
            {"temperature", params.temperature},
            {"messages", std::move(messages)},
        };
        if (params.max_tokens) body["max_tokens"] = *params.max_tokens;
        return body.dump();
    }

    static std::string extract_content(const httplib::Response& res) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res.body);
        } catch (const nlohmann::json::exception&) {
            throw ApiError(res.status, "response is not json");
        }
        if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
            throw ApiError(res.status, "response has no choices");
        const auto& choice = doc["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            !choice["message"]["content"].is_string())
            throw ApiError(res.status, "choice has no message content");
        return choice["message"]["content"].get<std::string>();
    }

    std::string complete(const std::vector<ChatMessage>& history, const CompletionParams& params) {
        std::string body = body_for(history, params);
        httplib::Headers headers{{"Accept", "application/json"}};
        if (!config.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config.api_key);

        auto delays = backoff_schedule(config.backoff_seed, config.max_tries, config.base_delay);
        std::string last_failure;
        for (int attempt = 0; attempt < config.max_tries; ++attempt) {
            httplib::Result res;
            {
                std::lock_guard lock(mutex);
                res = client.Post(url.path, headers, body, "application/json");
            }
            if (!res) {
                last_failure = "transport: " + httplib::to_string(res.error());
            } else if (res->status >= 200 && res->status < 300) {
                return extract_content(*res);
            } else if (res->status == 429 || res->status >= 500) {
                last_failure = "status " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200);
            } else {
                throw ApiError(res->status, res->body.substr(0, 500));
            }
            if (attempt + 1 < config.max_tries) config.sleeper(delays[attempt]);
        }
        throw TransportError("gave up after " + std::to_string(config.max_tries) +
                             " attempts; last failure: " + last_failure);
    }
};

HttpBackend::HttpBackend(HttpBackendConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::complete(const std::vector<ChatMessage>& history,
                                  const CompletionParams& params) {
    return impl_->complete(history, params);
}

} // namespace lpml
