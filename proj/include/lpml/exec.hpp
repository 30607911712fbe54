#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpml/ast.hpp"

namespace lpml {

struct ExecutionLimits {
    double wall_clock_timeout = 30.0;           // seconds
    std::size_t max_output_bytes = 64 * 1024;   // stdout+stderr combined
    std::vector<std::string> interpreter_command = {"python3"};
};

struct ExitStatus {
    bool signalled = false;
    int value = 0; // exit code, or signal number when signalled
};

struct ExecutionResult {
    std::string stdout_text;
    std::string stderr_text;
    ExitStatus status;
    double duration = 0.0; // seconds
    bool timed_out = false;
    bool truncated = false;
};

// Configuration/OS-level failures, distinct from failures of the executed
// code (those land in ExecutionResult).
class ExecError : public std::runtime_error {
public:
    enum class Kind { InterpreterNotFound, SpawnFailure };

    ExecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Runs `code` in a fresh interpreter process: the code is written to the
// child's stdin, stdout/stderr are captured separately, the process group
// is killed at the wall-clock timeout, and combined output is cut at
// max_output_bytes. No state carries across calls.
ExecutionResult execute(std::string_view code, const ExecutionLimits& limits);

// Wraps execution results as protocol feedback: one <OUTPUT tool="PYTHON">
// element per result, in order; stdout first, stderr appended when present,
// then the timeout/truncation notice lines.
Document format_feedback(const std::vector<ExecutionResult>& results);

} // namespace lpml
