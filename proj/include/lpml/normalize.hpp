#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lpml/ast.hpp"
#include "lpml/policy.hpp"

namespace lpml {

enum class RemovalRule {
    ForbiddenTag,     // top-level element the assistant may not use (fake OUTPUT etc.)
    UntaggedText,     // top-level text outside any element
    AnswerWithPython, // ANSWER dropped because PYTHON is present in the same message
    AfterEos,         // anything following the first top-level EOS
};

std::string_view to_string(RemovalRule rule);

struct Removal {
    RemovalRule rule;
    SourceSpan span;
    std::string excerpt; // first 80 bytes of the removed content, UTF-8 safe
};

struct NormalizedMessage {
    Document doc;
    std::vector<Removal> removals;
    bool had_python = false;
    bool had_answer_removed = false;
};

// Sanitizes raw assistant output, in rule order: truncate after the first
// top-level EOS, drop forbidden top-level elements, drop top-level text,
// and drop ANSWER when PYTHON survives alongside it. Content inside allowed
// elements is never touched. Whitespace-only top-level text vanishes
// silently, without a Removal record.
NormalizedMessage normalize_assistant(const Document& raw,
                                      const TagPolicy& policy = TagPolicy::defaults());

} // namespace lpml
