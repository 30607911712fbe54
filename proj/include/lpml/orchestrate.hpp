#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lpml/exec.hpp"
#include "lpml/gateway.hpp"
#include "lpml/normalize.hpp"
#include "lpml/policy.hpp"
#include "lpml/prompt.hpp"

namespace lpml {

struct LoopConfig {
    int max_turns = 8;    // backend calls per attempt
    int max_attempts = 5; // independent conversations per problem
    double temp_start = 0.0;
    double temp_step = 0.1;
};

// Sampling temperature for a 1-based attempt index.
double attempt_temperature(const LoopConfig& config, int attempt_index);

struct Turn {
    std::string assistant_raw;   // exactly what the backend returned
    std::string assistant_clean; // normalized form; this is what enters the history
    std::vector<Removal> removals;
    std::vector<ExecutionResult> executions; // one per top-level PYTHON element, in order
    std::string system_reply;    // feedback or nudge sent back; empty on a final turn
    bool answered = false;
    std::optional<std::string> answer; // trimmed ANSWER content when answered
};

struct Attempt {
    int index = 1; // 1-based
    double temperature = 0.0;
    std::vector<Turn> turns;
    bool solved = false;
};

enum class UnsolvedReason {
    TurnsExhaustedAllAttempts,
    BackendError,
};

std::string_view to_string(UnsolvedReason reason);

struct SolveOutcome {
    bool solved = false;
    std::optional<std::string> answer;
    std::optional<UnsolvedReason> reason; // set when not solved
    std::string error;                    // backend failure detail
};

// Full record of one solve: every attempt, every turn, plus the recorded
// request/response cassette, so the session can be replayed offline.
struct Transcript {
    std::string problem;
    std::string model_id;
    LoopConfig config;
    std::vector<Attempt> attempts;
    SolveOutcome outcome;
    Cassette cassette;

    std::string to_json() const;
    static Transcript from_json(const std::string& text);
    void save(const std::string& path) const;
    static Transcript load(const std::string& path);
};

// True when the two runs describe the same conversation: same outcome and
// the same message sequence turn for turn. Execution timings are ignored;
// they differ from run to run by nature.
bool same_conversation(const Transcript& a, const Transcript& b);

using ExecuteFn = std::function<ExecutionResult(std::string_view, const ExecutionLimits&)>;

struct OrchestratorConfig {
    TagPolicy policy = TagPolicy::defaults();
    PromptTemplate prompt;
    ExecutionLimits limits;
    LoopConfig loop;
    std::string model_id = "gpt-4";
    ExecuteFn execute_fn; // defaults to the real sandboxed interpreter
};

// Drives the conversation protocol: send prompt, normalize the reply, run
// embedded code, feed output back, until an answer arrives or the turn and
// attempt budgets run out. Each attempt is a fresh conversation at its own
// temperature. Interpreter setup failures (ExecError) propagate; they are
// operator problems, not conversation events.
class Orchestrator {
public:
    explicit Orchestrator(OrchestratorConfig config);

    // Runs the full attempt loop against the backend, recording traffic.
    Transcript solve(std::string_view problem, Backend& backend) const;

    // Replays a saved transcript against its own cassette. Throws
    // FingerprintMismatch/BackendExhausted when the current code would
    // conduct a different conversation than the recorded one.
    Transcript replay(const Transcript& recorded) const;

private:
    Attempt run_attempt(const std::string& initial_prompt, int attempt_index, Backend& backend,
                        std::optional<std::string>& backend_error) const;

    OrchestratorConfig config_;
};

} // namespace lpml
