#include "lpml/orchestrate.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lpml/parse.hpp"
#include "lpml/serialize.hpp"

namespace lpml {

double attempt_temperature(const LoopConfig& config, int attempt_index) {
    return config.temp_start + config.temp_step * (attempt_index - 1);
}

std::string_view to_string(UnsolvedReason reason) {
    switch (reason) {
    case UnsolvedReason::TurnsExhaustedAllAttempts: return "turns_exhausted_all_attempts";
    case UnsolvedReason::BackendError: return "backend_error";
    }
    return "backend_error";
}

namespace {

UnsolvedReason reason_from_string(std::string_view s) {
    if (s == "turns_exhausted_all_attempts") return UnsolvedReason::TurnsExhaustedAllAttempts;
    if (s == "backend_error") return UnsolvedReason::BackendError;
    throw std::runtime_error("transcript: unknown unsolved reason: " + std::string(s));
}

RemovalRule rule_from_string(std::string_view s) {
    for (RemovalRule rule : {RemovalRule::ForbiddenTag, RemovalRule::UntaggedText,
                             RemovalRule::AnswerWithPython, RemovalRule::AfterEos})
        if (s == to_string(rule)) return rule;
    throw std::runtime_error("transcript: unknown removal rule: " + std::string(s));
}

nlohmann::json to_json(const Removal& removal) {
    return {{"rule", std::string(to_string(removal.rule))},
            {"begin", removal.span.begin},
            {"end", removal.span.end},
            {"excerpt", removal.excerpt}};
}

Removal removal_from_json(const nlohmann::json& j) {
    Removal removal;
    removal.rule = rule_from_string(j.at("rule").get<std::string>());
    removal.span = {j.at("begin").get<std::size_t>(), j.at("end").get<std::size_t>()};
    removal.excerpt = j.at("excerpt").get<std::string>();
    return removal;
}

nlohmann::json to_json(const ExecutionResult& result) {
    return {{"stdout", result.stdout_text},
            {"stderr", result.stderr_text},
            {"exit_signalled", result.status.signalled},
            {"exit_value", result.status.value},
            {"duration_seconds", result.duration},
            {"timed_out", result.timed_out},
            {"truncated", result.truncated}};
}

ExecutionResult execution_from_json(const nlohmann::json& j) {
    ExecutionResult result;
    result.stdout_text = j.at("stdout").get<std::string>();
    result.stderr_text = j.at("stderr").get<std::string>();
    result.status.signalled = j.at("exit_signalled").get<bool>();
    result.status.value = j.at("exit_value").get<int>();
    result.duration = j.at("duration_seconds").get<double>();
    result.timed_out = j.at("timed_out").get<bool>();
    result.truncated = j.at("truncated").get<bool>();
    return result;
}

nlohmann::json to_json(const Turn& turn) {
    nlohmann::json removals = nlohmann::json::array();
    for (const auto& removal : turn.removals) removals.push_back(to_json(removal));
    nlohmann::json executions = nlohmann::json::array();
    for (const auto& result : turn.executions) executions.push_back(to_json(result));
    nlohmann::json j{{"assistant_raw", turn.assistant_raw},
                     {"assistant_clean", turn.assistant_clean},
                     {"removals", std::move(removals)},
                     {"executions", std::move(executions)},
                     {"system_reply", turn.system_reply},
                     {"answered", turn.answered}};
    if (turn.answer) j["answer"] = *turn.answer;
    return j;
}

Turn turn_from_json(const nlohmann::json& j) {
    Turn turn;
    turn.assistant_raw = j.at("assistant_raw").get<std::string>();
    turn.assistant_clean = j.at("assistant_clean").get<std::string>();
    for (const auto& item : j.at("removals")) turn.removals.push_back(removal_from_json(item));
    for (const auto& item : j.at("executions")) turn.executions.push_back(execution_from_json(item));
    turn.system_reply = j.at("system_reply").get<std::string>();
    turn.answered = j.at("answered").get<bool>();
    if (j.contains("answer")) turn.answer = j["answer"].get<std::string>();
    return turn;
}

bool same_execution(const ExecutionResult& a, const ExecutionResult& b) {
    return a.stdout_text == b.stdout_text && a.stderr_text == b.stderr_text &&
           a.status.signalled == b.status.signalled && a.status.value == b.status.value &&
           a.timed_out == b.timed_out && a.truncated == b.truncated;
}

bool same_removal(const Removal& a, const Removal& b) {
    return a.rule == b.rule && a.span == b.span && a.excerpt == b.excerpt;
}

bool same_turn(const Turn& a, const Turn& b) {
    if (a.assistant_raw != b.assistant_raw || a.assistant_clean != b.assistant_clean ||
        a.system_reply != b.system_reply || a.answered != b.answered || a.answer != b.answer)
        return false;
    if (a.removals.size() != b.removals.size() || a.executions.size() != b.executions.size())
        return false;
    for (std::size_t i = 0; i < a.removals.size(); ++i)
        if (!same_removal(a.removals[i], b.removals[i])) return false;
    for (std::size_t i = 0; i < a.executions.size(); ++i)
        if (!same_execution(a.executions[i], b.executions[i])) return false;
    return true;
}

} // namespace

std::string Transcript::to_json() const {
    nlohmann::json attempts_json = nlohmann::json::array();
    for (const auto& attempt : attempts) {
        nlohmann::json turns = nlohmann::json::array();
        for (const auto& turn : attempt.turns) turns.push_back(lpml::to_json(turn));
        attempts_json.push_back({{"index", attempt.index},
                                 {"temperature", attempt.temperature},
                                 {"solved", attempt.solved},
                                 {"turns", std::move(turns)}});
    }
    nlohmann::json outcome_json{{"solved", outcome.solved}, {"error", outcome.error}};
    if (outcome.answer) outcome_json["answer"] = *outcome.answer;
    if (outcome.reason) outcome_json["reason"] = std::string(to_string(*outcome.reason));
    nlohmann::json doc{
        {"version", 1},
        {"problem", problem},
        {"model_id", model_id},
        {"config",
         {{"max_turns", config.max_turns},
          {"max_attempts", config.max_attempts},
          {"temp_start", config.temp_start},
          {"temp_step", config.temp_step}}},
        {"attempts", std::move(attempts_json)},
        {"outcome", std::move(outcome_json)},
        {"cassette", nlohmann::json::parse(cassette.to_json())},
    };
    return doc.dump(2);
}

Transcript Transcript::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("transcript: invalid json: ") + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1)
            throw std::runtime_error("transcript: unsupported version");
        Transcript t;
        t.problem = doc.at("problem").get<std::string>();
        t.model_id = doc.at("model_id").get<std::string>();
        const auto& cfg = doc.at("config");
        t.config.max_turns = cfg.at("max_turns").get<int>();
        t.config.max_attempts = cfg.at("max_attempts").get<int>();
        t.config.temp_start = cfg.at("temp_start").get<double>();
        t.config.temp_step = cfg.at("temp_step").get<double>();
        for (const auto& attempt_json : doc.at("attempts")) {
            Attempt attempt;
            attempt.index = attempt_json.at("index").get<int>();
            attempt.temperature = attempt_json.at("temperature").get<double>();
            attempt.solved = attempt_json.at("solved").get<bool>();
            for (const auto& turn_json : attempt_json.at("turns"))
                attempt.turns.push_back(turn_from_json(turn_json));
            t.attempts.push_back(std::move(attempt));
        }
        const auto& outcome_json = doc.at("outcome");
        t.outcome.solved = outcome_json.at("solved").get<bool>();
        t.outcome.error = outcome_json.at("error").get<std::string>();
        if (outcome_json.contains("answer"))
            t.outcome.answer = outcome_json["answer"].get<std::string>();
        if (outcome_json.contains("reason"))
            t.outcome.reason = reason_from_string(outcome_json["reason"].get<std::string>());
        t.cassette = Cassette::from_json(doc.at("cassette").dump());
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("transcript: malformed field: ") + e.what());
    }
}

void Transcript::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("transcript: cannot open for writing: " + path);
    out << to_json() << '\n';
    if (!out.flush()) throw std::runtime_error("transcript: write failed: " + path);
}

Transcript Transcript::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("transcript: cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

bool same_conversation(const Transcript& a, const Transcript& b) {
    if (a.problem != b.problem || a.model_id != b.model_id) return false;
    if (a.config.max_turns != b.config.max_turns ||
        a.config.max_attempts != b.config.max_attempts ||
        a.config.temp_start != b.config.temp_start || a.config.temp_step != b.config.temp_step)
        return false;
    if (a.outcome.solved != b.outcome.solved || a.outcome.answer != b.outcome.answer ||
        a.outcome.reason != b.outcome.reason || a.outcome.error != b.outcome.error)
        return false;
    if (a.attempts.size() != b.attempts.size()) return false;
    for (std::size_t i = 0; i < a.attempts.size(); ++i) {
        const Attempt& x = a.attempts[i];
        const Attempt& y = b.attempts[i];
        if (x.index != y.index || x.temperature != y.temperature || x.solved != y.solved ||
            x.turns.size() != y.turns.size())
            return false;
        for (std::size_t k = 0; k < x.turns.size(); ++k)
            if (!same_turn(x.turns[k], y.turns[k])) return false;
    }
    return true;
}

Orchestrator::Orchestrator(OrchestratorConfig config) : config_(std::move(config)) {
    if (config_.loop.max_turns < 1) throw std::invalid_argument("max_turns must be at least 1");
    if (config_.loop.max_attempts < 1)
        throw std::invalid_argument("max_attempts must be at least 1");
    if (config_.prompt.greeting.empty())
        throw std::invalid_argument("prompt template has no greeting");
    if (!config_.execute_fn)
        config_.execute_fn = [](std::string_view code, const ExecutionLimits& limits) {
            return execute(code, limits);
        };
}

Attempt Orchestrator::run_attempt(const std::string& initial_prompt, int attempt_index,
                                  Backend& backend,
                                  std::optional<std::string>& backend_error) const {
    Attempt attempt;
    attempt.index = attempt_index;
    attempt.temperature = attempt_temperature(config_.loop, attempt_index);

    std::vector<ChatMessage> history{{ChatMessage::Role::System, initial_prompt}};
    CompletionParams params;
    params.temperature = attempt.temperature;
    params.model_id = config_.model_id;

    for (int turn_no = 1; turn_no <= config_.loop.max_turns; ++turn_no) {
        Turn turn;
        try {
            turn.assistant_raw = complete(history, params, backend);
        } catch (const FingerprintMismatch&) {
            throw; // replay drift is diagnosed by the caller, not recorded as an outcome
        } catch (const GatewayError& e) {
            backend_error = e.what();
            return attempt;
        }

        Document raw = parse(turn.assistant_raw, config_.policy);
        NormalizedMessage normalized = normalize_assistant(raw, config_.policy);
        turn.assistant_clean = serialize(normalized.doc);
        turn.removals = normalized.removals;
        history.push_back({ChatMessage::Role::Assistant, turn.assistant_clean});

        auto answers = top_level_elements(normalized.doc, "ANSWER");
        if (!answers.empty()) {
            turn.answered = true;
            turn.answer = trim_copy(content_text(*answers.front()));
            attempt.turns.push_back(std::move(turn));
            attempt.solved = true;
            return attempt;
        }

        if (turn_no == config_.loop.max_turns) {
            // Nothing we send back could be consumed; leftover code is not run.
            attempt.turns.push_back(std::move(turn));
            break;
        }

        auto code = top_level_elements(normalized.doc, "PYTHON");
        if (!code.empty()) {
            for (const Node* element : code)
                turn.executions.push_back(config_.execute_fn(content_text(*element), config_.limits));
            turn.system_reply = serialize(format_feedback(turn.executions)) + "<EOS>";
        } else {
            turn.system_reply = "<OUTPUT>" + config_.prompt.greeting + "</OUTPUT><EOS>";
        }
        history.push_back({ChatMessage::Role::System, turn.system_reply});
        attempt.turns.push_back(std::move(turn));
    }
    return attempt;
}

Transcript Orchestrator::solve(std::string_view problem, Backend& backend) const {
    Transcript transcript;
    transcript.problem = std::string(problem);
    transcript.model_id = config_.model_id;
    transcript.config = config_.loop;

    std::string initial_prompt = serialize(build_initial_prompt(problem, config_.prompt));
    RecordingBackend recorder(backend);

    for (int i = 1; i <= config_.loop.max_attempts; ++i) {
        std::optional<std::string> backend_error;
        Attempt attempt = run_attempt(initial_prompt, i, recorder, backend_error);
        bool solved = attempt.solved;
        std::optional<std::string> answer;
        if (solved && !attempt.turns.empty()) answer = attempt.turns.back().answer;
        transcript.attempts.push_back(std::move(attempt));
        if (backend_error) {
            transcript.outcome.solved = false;
            transcript.outcome.reason = UnsolvedReason::BackendError;
            transcript.outcome.error = *backend_error;
            transcript.cassette = recorder.cassette();
            return transcript;
        }
        if (solved) {
            transcript.outcome.solved = true;
            transcript.outcome.answer = answer;
            transcript.cassette = recorder.cassette();
            return transcript;
        }
    }
    transcript.outcome.solved = false;
    transcript.outcome.reason = UnsolvedReason::TurnsExhaustedAllAttempts;
    transcript.cassette = recorder.cassette();
    return transcript;
}

Transcript Orchestrator::replay(const Transcript& recorded) const {
    OrchestratorConfig config = config_;
    config.loop = recorded.config;
    config.model_id = recorded.model_id;
    Orchestrator replayer(std::move(config));
    ReplayBackend backend(recorded.cassette);
    return replayer.solve(recorded.problem, backend);
}

} // namespace lpml
