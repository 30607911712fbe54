#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lpml/ast.hpp"
#include "lpml/orchestrate.hpp"

namespace lpml {

struct ProblemRecord {
    std::string id;
    std::string problem;
    std::string gold_answer; // raw answer text as found in the dataset
};

enum class DatasetFormat {
    Gsm8kJsonl,  // one json object per line: {"question", "answer"}, gold after "#### "
    MathJsonDir, // directory tree of {"problem", "solution"} files, gold inside \boxed{}
};

struct LoadResult {
    std::vector<ProblemRecord> problems;
    std::vector<std::string> issues; // records skipped or repaired, one note each
};

// Loads a dataset in deterministic order (line order, or sorted relative
// paths). Unreadable files throw; individually broken records are skipped
// with a note in issues.
LoadResult load_problems(const std::string& path, DatasetFormat format);

// A graded answer value. Order of preference when parsing: exact rational,
// floating-point, verbatim text.
struct Rational {
    long long num = 0;
    long long den = 1; // positive; gcd(num, den) == 1
    bool operator==(const Rational&) const = default;
};

struct Real {
    double value = 0.0;
    bool operator==(const Real&) const = default;
};

struct Literal {
    std::string text; // whitespace removed
    bool operator==(const Literal&) const = default;
};

using AnswerValue = std::variant<Rational, Real, Literal>;

// Interprets free-form answer text: innermost \boxed{...}, \frac{a}{b},
// $ and \text wrappers, thousands separators, and a trailing-number
// heuristic for prose ("So the answer is 72."). Anything that resists a
// numeric reading becomes a Literal.
AnswerValue parse_answer_text(std::string_view text);

enum class Verdict {
    Correct,
    Incorrect,
    NeedsReview, // non-identical literals; a human has to look
    Unsolved,    // the solver never produced an answer
};

std::string_view to_string(Verdict verdict);

// Compares a predicted value against gold. Rationals compare exactly;
// anything floating-point compares with absolute/relative tolerance 1e-6;
// differing literals are never auto-judged.
Verdict score(const AnswerValue& predicted, const AnswerValue& gold);

// Convenience: parse both sides, then score.
Verdict grade(std::string_view predicted_text, std::string_view gold_text);

// Trimmed content of the first top-level ANSWER element; empty or absent
// answers yield nullopt.
std::optional<std::string> extract_answer(const Document& message);

struct ProblemResult {
    std::string id;
    std::string gold_answer;
    std::optional<std::string> predicted; // absent when unsolved
    Verdict verdict = Verdict::Unsolved;
    int attempts_used = 0;
    int total_turns = 0;
};

struct BenchmarkReport {
    std::vector<ProblemResult> results; // in dataset order
    int correct = 0;
    int incorrect = 0;
    int needs_review = 0;
    int unsolved = 0;

    int total() const { return correct + incorrect + needs_review + unsolved; }
    double accuracy() const; // correct / total, 0 on an empty run

    std::string to_json() const; // deterministic; no timings, no host state
    std::string render_table() const;
};

struct BenchmarkOptions {
    int parallelism = 1;
    std::optional<std::string> transcript_dir; // per-problem transcripts land here
};

// Solves every problem and grades the outcomes. Problems are distributed
// over `parallelism` worker threads; the report is identical regardless of
// worker count. The backend must tolerate concurrent calls.
BenchmarkReport run_benchmark(const std::vector<ProblemRecord>& problems,
                              const Orchestrator& orchestrator, Backend& backend,
                              const BenchmarkOptions& options = {});

// Filesystem-safe name for a problem id.
std::string sanitize_id(std::string_view id);

} // namespace lpml
