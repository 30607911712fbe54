#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lpml/ast.hpp"
#include "lpml/policy.hpp"

namespace lpml {

struct TagDefinition {
    std::string name; // canonical, registered in the active policy
    std::string description;
};

struct RuleDefinition {
    std::optional<std::string> role; // "system" or "assistant"; general rule when absent
    std::string body;                // verbatim, non-empty
};

// The pieces of the initial system message. The shipped default lives in
// fixtures/default_prompt.lpml as an editable LPML file, not in code.
struct PromptTemplate {
    std::vector<RuleDefinition> rules;
    std::vector<TagDefinition> tags;
    std::string greeting; // OUTPUT content, verbatim
};

// Parses a template file: DEFINE type="rule" [role=...] elements become
// rules, DEFINE type="tag" name=... become tag definitions, the OUTPUT
// element becomes the greeting. Throws std::runtime_error on files that
// do not form a usable template.
PromptTemplate parse_template(std::string_view text, const TagPolicy& policy = TagPolicy::defaults());
PromptTemplate load_template(const std::string& path, const TagPolicy& policy = TagPolicy::defaults());

// Assembles the initial system message: general-rule DEFINEs, tag DEFINEs,
// role-rule DEFINEs, the PROBLEM, the OUTPUT greeting, and a closing EOS,
// with blank-line text separators between blocks. Problem text is inserted
// verbatim. Throws std::invalid_argument on an empty problem.
Document build_initial_prompt(std::string_view problem, const PromptTemplate& tmpl);

std::string trim_copy(std::string_view s);

} // namespace lpml
