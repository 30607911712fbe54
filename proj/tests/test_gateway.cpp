#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "lpml/gateway.hpp"

using namespace lpml;

namespace {

std::vector<ChatMessage> basic_history() {
    return {{ChatMessage::Role::System, "hello"}};
}

CompletionParams basic_params() {
    CompletionParams params;
    params.model_id = "m";
    return params;
}

// In-process chat-completions endpoint with a programmable handler.
struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::atomic<int> requests{0};
    std::function<void(const httplib::Request&, httplib::Response&, int)> handler;

    LocalServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            int n = ++requests;
            handler(req, res, n);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~LocalServer() {
        server.stop();
        thread.join();
    }

    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    }

    static void reply(httplib::Response& res, const std::string& content) {
        nlohmann::json message{{"content", content}};
        nlohmann::json choice{{"message", message}};
        nlohmann::json body;
        body["choices"] = nlohmann::json::array({choice});
        res.set_content(body.dump(), "application/json");
    }
};

HttpBackendConfig fast_config(const std::string& url,
                              std::vector<std::chrono::milliseconds>* slept = nullptr) {
    HttpBackendConfig config;
    config.endpoint_url = url;
    config.api_key = "test-key";
    config.base_delay = std::chrono::milliseconds(1);
    config.sleeper = [slept](std::chrono::milliseconds d) {
        if (slept) slept->push_back(d);
    };
    return config;
}

} // namespace

TEST_CASE("scripted backend hands out replies in order, then exhausts") {
    ScriptedBackend backend({"one", "two"});
    CHECK(complete(basic_history(), basic_params(), backend) == "one");
    CHECK(complete(basic_history(), basic_params(), backend) == "two");
    CHECK_THROWS_AS(complete(basic_history(), basic_params(), backend), BackendExhausted);
    CHECK(backend.calls() == 3);
}

TEST_CASE("scripted backend can repeat its last reply") {
    ScriptedBackend backend({"a", "b"}, /*repeat_last=*/true);
    CHECK(backend.complete(basic_history(), basic_params()) == "a");
    CHECK(backend.complete(basic_history(), basic_params()) == "b");
    CHECK(backend.complete(basic_history(), basic_params()) == "b");
    CHECK(backend.complete(basic_history(), basic_params()) == "b");
}

TEST_CASE("complete() enforces the protocol preconditions") {
    ScriptedBackend backend({"x"});
    CHECK_THROWS_AS(complete({}, basic_params(), backend), std::invalid_argument);
    CHECK_THROWS_AS(complete({{ChatMessage::Role::User, "hi"}}, basic_params(), backend),
                    std::invalid_argument);
    CompletionParams bad = basic_params();
    bad.temperature = 2.5;
    CHECK_THROWS_AS(complete(basic_history(), bad, backend), std::invalid_argument);
    bad.temperature = -0.1;
    CHECK_THROWS_AS(complete(basic_history(), bad, backend), std::invalid_argument);
}

TEST_CASE("fingerprints match the frozen reference values") {
    CHECK(request_fingerprint(basic_history(), basic_params()) == "a8858921958214cd");

    std::vector<ChatMessage> history{{ChatMessage::Role::System, "hello"},
                                     {ChatMessage::Role::Assistant, "<EOS>"}};
    CompletionParams params;
    params.model_id = "gpt-4";
    params.temperature = 0.3;
    params.max_tokens = 256;
    CHECK(request_fingerprint(history, params) == "5472a2ab966dbb0c");
}

TEST_CASE("fingerprints react to every request component") {
    auto history = basic_history();
    auto params = basic_params();
    std::string base = request_fingerprint(history, params);

    auto changed_role = history;
    changed_role[0].role = ChatMessage::Role::User;
    CHECK(request_fingerprint(changed_role, params) != base);

    auto changed_content = history;
    changed_content[0].content += "!";
    CHECK(request_fingerprint(changed_content, params) != base);

    auto more_messages = history;
    more_messages.push_back({ChatMessage::Role::Assistant, ""});
    CHECK(request_fingerprint(more_messages, params) != base);

    auto warm = params;
    warm.temperature = 0.1;
    CHECK(request_fingerprint(history, warm) != base);

    auto other_model = params;
    other_model.model_id = "m2";
    CHECK(request_fingerprint(history, other_model) != base);

    auto capped = params;
    capped.max_tokens = 1;
    CHECK(request_fingerprint(history, capped) != base);
}

TEST_CASE("cassette json round trip") {
    Cassette cassette;
    cassette.entries.push_back({"00ff00ff00ff00ff", "reply with \"quotes\" and\nnewlines"});
    cassette.entries.push_back({"1234567890abcdef", "second"});
    Cassette back = Cassette::from_json(cassette.to_json());
    CHECK(back == cassette);
}

TEST_CASE("cassette file save and load") {
    auto path = (std::filesystem::temp_directory_path() / "lpml_cassette_test.json").string();
    Cassette cassette;
    cassette.entries.push_back({"aaaaaaaaaaaaaaaa", "hi"});
    cassette.save(path);
    CHECK(Cassette::load(path) == cassette);
    std::filesystem::remove(path);
}

TEST_CASE("cassette rejects malformed json") {
    CHECK_THROWS_AS(Cassette::from_json("not json"), GatewayError);
    CHECK_THROWS_AS(Cassette::from_json("{}"), GatewayError);
    CHECK_THROWS_AS(Cassette::from_json(R"({"entries": [{"fingerprint": 5}]})"), GatewayError);
}

TEST_CASE("recording then replaying reproduces the session") {
    ScriptedBackend inner({"first", "second"});
    RecordingBackend recorder(inner);

    auto history = basic_history();
    auto params = basic_params();
    CHECK(complete(history, params, recorder) == "first");
    history.push_back({ChatMessage::Role::Assistant, "first"});
    CHECK(complete(history, params, recorder) == "second");

    ReplayBackend replay(recorder.cassette());
    auto fresh = basic_history();
    CHECK(complete(fresh, params, replay) == "first");
    fresh.push_back({ChatMessage::Role::Assistant, "first"});
    CHECK(complete(fresh, params, replay) == "second");
    CHECK_THROWS_AS(complete(fresh, params, replay), BackendExhausted);
}

TEST_CASE("replay rejects a diverged request") {
    Cassette cassette;
    cassette.entries.push_back(
        {request_fingerprint(basic_history(), basic_params()), "recorded"});
    ReplayBackend replay(cassette);
    std::vector<ChatMessage> other{{ChatMessage::Role::System, "different prompt"}};
    CHECK_THROWS_AS(complete(other, basic_params(), replay), FingerprintMismatch);
}

TEST_CASE("backoff schedule is deterministic and exponential") {
    using std::chrono::milliseconds;
    auto a = backoff_schedule(42, 5, milliseconds(500));
    auto b = backoff_schedule(42, 5, milliseconds(500));
    auto c = backoff_schedule(43, 5, milliseconds(500));
    CHECK(a == b);
    CHECK(a != c);
    REQUIRE(a.size() == 4);
    for (int i = 0; i < 4; ++i) {
        auto floor = milliseconds(500 * (1 << i));
        CHECK(a[i] >= floor);
        CHECK(a[i] <= floor + milliseconds(250));
    }
}

TEST_CASE("http backend completes a chat request") {
    LocalServer server;
    nlohmann::json seen;
    std::string auth;
    server.handler = [&](const httplib::Request& req, httplib::Response& res, int) {
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        LocalServer::reply(res, "<ANSWER>4</ANSWER>");
    };

    HttpBackend backend(fast_config(server.url()));
    std::vector<ChatMessage> history{{ChatMessage::Role::System, "prompt"},
                                     {ChatMessage::Role::Assistant, "<EOS>"},
                                     {ChatMessage::Role::System, "feedback"}};
    CompletionParams params;
    params.model_id = "test-model";
    params.temperature = 0.2;
    params.max_tokens = 512;

    CHECK(complete(history, params, backend) == "<ANSWER>4</ANSWER>");
    CHECK(auth == "Bearer test-key");
    CHECK(seen["model"] == "test-model");
    CHECK(seen["temperature"].get<double>() == doctest::Approx(0.2));
    CHECK(seen["max_tokens"] == 512);
    REQUIRE(seen["messages"].size() == 3);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["role"] == "assistant");
    CHECK(seen["messages"][2]["role"] == "system");
    CHECK(seen["messages"][2]["content"] == "feedback");
}

TEST_CASE("system_as_user downgrades only mid-conversation system messages") {
    LocalServer server;
    nlohmann::json seen;
    server.handler = [&](const httplib::Request& req, httplib::Response& res, int) {
        seen = nlohmann::json::parse(req.body);
        LocalServer::reply(res, "ok");
    };

    auto config = fast_config(server.url());
    config.system_as_user = true;
    HttpBackend backend(config);
    std::vector<ChatMessage> history{{ChatMessage::Role::System, "prompt"},
                                     {ChatMessage::Role::Assistant, "a"},
                                     {ChatMessage::Role::System, "feedback"}};
    complete(history, basic_params(), backend);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][2]["role"] == "user");
}

TEST_CASE("transient failures are retried with the deterministic backoff") {
    LocalServer server;
    server.handler = [&](const httplib::Request&, httplib::Response& res, int n) {
        if (n <= 2) {
            res.status = n == 1 ? 500 : 429;
            res.set_content("busy", "text/plain");
        } else {
            LocalServer::reply(res, "finally");
        }
    };

    std::vector<std::chrono::milliseconds> slept;
    auto config = fast_config(server.url(), &slept);
    HttpBackend backend(config);
    CHECK(complete(basic_history(), basic_params(), backend) == "finally");
    CHECK(server.requests.load() == 3);
    auto expected = backoff_schedule(config.backoff_seed, config.max_tries, config.base_delay);
    REQUIRE(slept.size() == 2);
    CHECK(slept[0] == expected[0]);
    CHECK(slept[1] == expected[1]);
}

TEST_CASE("a client error is thrown immediately, no retry") {
    LocalServer server;
    server.handler = [&](const httplib::Request&, httplib::Response& res, int) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    };

    HttpBackend backend(fast_config(server.url()));
    try {
        complete(basic_history(), basic_params(), backend);
        FAIL("expected ApiError");
    } catch (const ApiError& e) {
        CHECK(e.status() == 400);
    }
    CHECK(server.requests.load() == 1);
}

TEST_CASE("persistent server failure exhausts max_tries") {
    LocalServer server;
    server.handler = [&](const httplib::Request&, httplib::Response& res, int) {
        res.status = 503;
        res.set_content("down", "text/plain");
    };

    std::vector<std::chrono::milliseconds> slept;
    auto config = fast_config(server.url(), &slept);
    config.max_tries = 3;
    HttpBackend backend(config);
    CHECK_THROWS_AS(complete(basic_history(), basic_params(), backend), TransportError);
    CHECK(server.requests.load() == 3);
    CHECK(slept.size() == 2);
}

TEST_CASE("a malformed 200 response is an api error") {
    LocalServer server;
    server.handler = [&](const httplib::Request&, httplib::Response& res, int) {
        res.set_content("{\"choices\": []}", "application/json");
    };
    HttpBackend backend(fast_config(server.url()));
    CHECK_THROWS_AS(complete(basic_history(), basic_params(), backend), ApiError);
}

TEST_CASE("an unreachable endpoint becomes TransportError after retries") {
    auto config = fast_config("http://127.0.0.1:9/v1/chat/completions");
    config.max_tries = 2;
    HttpBackend backend(config);
    CHECK_THROWS_AS(complete(basic_history(), basic_params(), backend), TransportError);
}

TEST_CASE("invalid endpoint urls are rejected up front") {
    CHECK_THROWS_AS(HttpBackend(fast_config("ftp://example.com/x")), std::invalid_argument);
    CHECK_THROWS_AS(HttpBackend(fast_config("no-scheme")), std::invalid_argument);
}
