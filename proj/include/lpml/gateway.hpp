#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lpml {

struct ChatMessage {
    enum class Role { System, User, Assistant };

    Role role = Role::System;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

std::string_view to_string(ChatMessage::Role role);
ChatMessage::Role role_from_string(std::string_view s);

struct CompletionParams {
    double temperature = 0.0; // [0, 2]
    std::string model_id;
    std::optional<int> max_tokens;
};

class GatewayError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class BackendExhausted : public GatewayError {
    using GatewayError::GatewayError;
};

class FingerprintMismatch : public GatewayError {
    using GatewayError::GatewayError;
};

class TransportError : public GatewayError {
    using GatewayError::GatewayError;
};

class ApiError : public GatewayError {
public:
    ApiError(int status, const std::string& body)
        : GatewayError("api error " + std::to_string(status) + ": " + body), status_(status) {}
    int status() const { return status_; }

private:
    int status_ = 0;
};

// A chat-completion backend: history in, next assistant message out.
// Implementations must tolerate concurrent calls from independent solve
// sessions.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& history,
                                 const CompletionParams& params) = 0;
};

// Validates the protocol preconditions (non-empty history, leading system
// message, temperature in range) before delegating to the backend.
std::string complete(const std::vector<ChatMessage>& history, const CompletionParams& params,
                     Backend& backend);

// Canned replies consumed in order. With repeat_last set, the final reply
// answers every further call instead of exhausting.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies, bool repeat_last = false);
    std::string complete(const std::vector<ChatMessage>&, const CompletionParams&) override;
    std::size_t calls() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    bool repeat_last_ = false;
    std::size_t calls_ = 0;
};

// Arbitrary reply function; handy for tests that key replies off history.
class FunctionBackend : public Backend {
public:
    using Fn = std::function<std::string(const std::vector<ChatMessage>&, const CompletionParams&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const std::vector<ChatMessage>& history,
                         const CompletionParams& params) override {
        return fn_(history, params);
    }

private:
    Fn fn_;
};

// Order-stable hash of a request (messages + params); replay keys on it.
std::string request_fingerprint(const std::vector<ChatMessage>& history,
                                const CompletionParams& params);

struct Cassette {
    struct Entry {
        std::string fingerprint;
        std::string response;
        bool operator==(const Entry&) const = default;
    };
    std::vector<Entry> entries;

    std::string to_json() const;
    static Cassette from_json(const std::string& text);
    void save(const std::string& path) const;
    static Cassette load(const std::string& path);

    bool operator==(const Cassette&) const = default;
};

// Replays a recorded session in order; a request whose fingerprint differs
// from the recording is drift and fails fast.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(Cassette cassette);
    std::string complete(const std::vector<ChatMessage>& history,
                         const CompletionParams& params) override;

private:
    std::mutex mutex_;
    Cassette cassette_;
    std::size_t next_ = 0;
};

// Captures every request/response pair passing through the inner backend.
class RecordingBackend : public Backend {
public:
    explicit RecordingBackend(Backend& inner) : inner_(inner) {}
    std::string complete(const std::vector<ChatMessage>& history,
                         const CompletionParams& params) override;
    Cassette cassette() const;

private:
    Backend& inner_;
    mutable std::mutex mutex_;
    Cassette captured_;
};

// Deterministic retry delays: base * 2^i plus seeded jitter.
std::vector<std::chrono::milliseconds> backoff_schedule(std::uint64_t seed, int tries,
                                                        std::chrono::milliseconds base);

struct HttpBackendConfig {
    std::string endpoint_url; // full URL of the chat-completions endpoint
    std::string api_key;      // sent as a bearer token when non-empty
    bool system_as_user = false; // send mid-conversation system messages as role user
    int max_tries = 5;
    std::chrono::milliseconds base_delay{500};
    std::uint64_t backoff_seed = 12345;
    std::function<void(std::chrono::milliseconds)> sleeper; // default: real sleep
};

// Chat-completions JSON over HTTP: retries transient failures (transport,
// 5xx, 429) with exponential backoff, at most max_tries attempts; other
// 4xx surface immediately as ApiError.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;
    std::string complete(const std::vector<ChatMessage>& history,
                         const CompletionParams& params) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace lpml
