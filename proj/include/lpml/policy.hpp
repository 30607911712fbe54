#pragma once

#include <set>
#include <string>
#include <string_view>

namespace lpml {

// The registered tag vocabulary and per-role permissions. Only registered
// names are ever recognized as markup during lexing; everything else stays
// literal text.
struct TagPolicy {
    std::set<std::string, std::less<>> registered;
    std::set<std::string, std::less<>> bare_capable;      // tags with no content or end tag
    std::set<std::string, std::less<>> assistant_allowed; // top-level tags the assistant may emit
    std::set<std::string, std::less<>> system_allowed;

    // DEFINE/PROBLEM/ANSWER/THINK/PYTHON/OUTPUT plus the bare EOS terminator;
    // the assistant may use THINK, PYTHON, ANSWER and EOS.
    static const TagPolicy& defaults();

    bool is_registered(std::string_view canonical_name) const;
    bool is_bare(std::string_view canonical_name) const;
    bool allowed_for_assistant(std::string_view canonical_name) const;

    // Uppercase canonical form. Comparison of tag names is case-insensitive.
    static std::string canonical(std::string_view name);

    // Letters, digits, underscore; first char a letter.
    static bool valid_name(std::string_view name);
};

} // namespace lpml
