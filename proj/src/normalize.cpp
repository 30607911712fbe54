#include "lpml/normalize.hpp"

#include <algorithm>
#include <cctype>

#include "lpml/serialize.hpp"

namespace lpml {

namespace {

constexpr std::size_t kExcerptBytes = 80;

bool whitespace_only(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

// Truncate to at most kExcerptBytes without splitting a UTF-8 sequence.
std::string make_excerpt(const Node& node) {
    std::string s = serialize(node);
    if (s.size() <= kExcerptBytes) return s;
    std::size_t cut = kExcerptBytes;
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    s.resize(cut);
    return s;
}

Removal removal_for(RemovalRule rule, const Node& node) {
    return {rule, node.span, make_excerpt(node)};
}

} // namespace

std::string_view to_string(RemovalRule rule) {
    switch (rule) {
    case RemovalRule::ForbiddenTag: return "ForbiddenTag";
    case RemovalRule::UntaggedText: return "UntaggedText";
    case RemovalRule::AnswerWithPython: return "AnswerWithPython";
    case RemovalRule::AfterEos: return "AfterEos";
    }
    return "?";
}

NormalizedMessage normalize_assistant(const Document& raw, const TagPolicy& policy) {
    NormalizedMessage out;

    // R1: the message logically ends at the first top-level EOS.
    std::vector<const Node*> kept;
    bool past_eos = false;
    for (const auto& node : raw.nodes) {
        if (past_eos) {
            if (node.is_text() && whitespace_only(node.text)) continue;
            out.removals.push_back(removal_for(RemovalRule::AfterEos, node));
            continue;
        }
        kept.push_back(&node);
        if (node.is_bare() && node.name == "EOS") past_eos = true;
    }

    // R2: forbidden top-level elements; R3: top-level text.
    std::vector<const Node*> allowed;
    for (const Node* node : kept) {
        if (node->is_text()) {
            if (!whitespace_only(node->text)) {
                out.removals.push_back(removal_for(RemovalRule::UntaggedText, *node));
            }
            continue;
        }
        if (!policy.allowed_for_assistant(node->name)) {
            out.removals.push_back(removal_for(RemovalRule::ForbiddenTag, *node));
            continue;
        }
        allowed.push_back(node);
    }

    // R4: an ANSWER never rides along with PYTHON; execution feedback comes first.
    bool has_python = false;
    bool has_answer = false;
    for (const Node* node : allowed) {
        if (node->is_element() && node->name == "PYTHON") has_python = true;
        if (node->is_element() && node->name == "ANSWER") has_answer = true;
    }
    const bool drop_answers = has_python && has_answer;
    for (const Node* node : allowed) {
        if (drop_answers && node->is_element() && node->name == "ANSWER") {
            out.removals.push_back(removal_for(RemovalRule::AnswerWithPython, *node));
            out.had_answer_removed = true;
            continue;
        }
        out.doc.nodes.push_back(*node);
    }
    out.had_python = has_python;
    return out;
}

} // namespace lpml
