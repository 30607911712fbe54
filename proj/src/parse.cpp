#include "lpml/parse.hpp"

#include <cctype>
#include <optional>

#include "lpml/serialize.hpp"

// Recovery model: the lexer recognizes a tag only when the full surface form
// is present and the name is registered; any failed candidate leaves `<` as
// literal text so LLM output degrades to plain text instead of breaking the
// tree. The parser itself never rejects input: unmatched end tags stay
// literal, unmatched start tags auto-close, and everything irregular is
// reported through diagnostics.

namespace lpml {

namespace {

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

struct LexedTag {
    bool is_end = false;
    std::string name; // canonical
    std::vector<Attribute> attrs;
    std::size_t end = 0; // one past '>'
    bool duplicate_attr = false;
};

// The canonical rendering of a start tag, for byte-fidelity comparison.
std::string canonical_start_tag(const std::string& name, const std::vector<Attribute>& attrs) {
    std::string out = "<" + name;
    for (const auto& a : attrs) {
        out += ' ';
        out += a.key;
        out += "=\"";
        out += a.value;
        out += '"';
    }
    out += '>';
    return out;
}

// Attempts to lex a tag at `pos` (input[pos] == '<'). Returns nullopt when
// the candidate is not a registered tag; emits MalformedAttribute when an
// attribute list was clearly started but cannot be completed.
std::optional<LexedTag> lex_tag(std::string_view input, std::size_t pos, const TagPolicy& policy,
                                std::vector<ParseDiagnostic>& diagnostics) {
    const std::size_t len = input.size();
    std::size_t i = pos + 1;

    LexedTag tag;
    if (i < len && input[i] == '/') {
        tag.is_end = true;
        ++i;
    }
    if (i >= len || !is_name_start(input[i])) return std::nullopt;
    const std::size_t name_begin = i;
    while (i < len && is_name_char(input[i])) ++i;
    tag.name = TagPolicy::canonical(input.substr(name_begin, i - name_begin));
    if (!policy.is_registered(tag.name)) return std::nullopt;

    if (tag.is_end) {
        while (i < len && is_space(input[i])) ++i;
        if (i < len && input[i] == '>') {
            tag.end = i + 1;
            return tag;
        }
        return std::nullopt;
    }

    // Attribute list. key="value" pairs; values run to the next double
    // quote; single quotes are literal.
    while (true) {
        if (i >= len) return std::nullopt; // unterminated, no attr started
        if (input[i] == '>') {
            tag.end = i + 1;
            return tag;
        }
        if (!is_space(input[i])) return std::nullopt; // junk directly after name
        while (i < len && is_space(input[i])) ++i;
        if (i >= len) return std::nullopt;
        if (input[i] == '>') {
            tag.end = i + 1;
            return tag;
        }
        if (!is_name_start(input[i]) && input[i] != '_') return std::nullopt;

        // From here on the text is committed to being an attribute; failure
        // is worth a diagnostic.
        const std::size_t attr_begin = i;
        while (i < len && is_name_char(input[i])) ++i;
        std::string key(input.substr(attr_begin, i - attr_begin));
        while (i < len && is_space(input[i])) ++i;
        if (i >= len || input[i] != '=') {
            diagnostics.push_back({DiagnosticKind::MalformedAttribute,
                                   {pos, i < len ? i + 1 : len},
                                   "attribute '" + key + "' has no '=value'; '<' kept as text"});
            return std::nullopt;
        }
        ++i;
        while (i < len && is_space(input[i])) ++i;
        if (i >= len || input[i] != '"') {
            diagnostics.push_back({DiagnosticKind::MalformedAttribute,
                                   {pos, i < len ? i + 1 : len},
                                   "attribute '" + key + "' value is not double-quoted; '<' kept as text"});
            return std::nullopt;
        }
        ++i;
        const std::size_t value_begin = i;
        while (i < len && input[i] != '"') ++i;
        if (i >= len) {
            diagnostics.push_back({DiagnosticKind::MalformedAttribute,
                                   {pos, len},
                                   "attribute '" + key + "' value never closed; '<' kept as text"});
            return std::nullopt;
        }
        std::string value(input.substr(value_begin, i - value_begin));
        ++i; // past closing quote

        bool duplicate = false;
        for (const auto& a : tag.attrs) {
            if (a.key == key) duplicate = true;
        }
        if (duplicate) {
            tag.duplicate_attr = true;
            diagnostics.push_back({DiagnosticKind::MalformedAttribute,
                                   {attr_begin, i},
                                   "duplicate attribute key '" + key + "'; first occurrence kept"});
        } else {
            tag.attrs.push_back({std::move(key), std::move(value)});
        }
    }
}

} // namespace

Document parse(std::string_view input, const TagPolicy& policy) {
    Document doc;

    struct Open {
        Node elem;
        std::size_t tag_begin = 0;
    };
    std::vector<Open> stack;

    auto sink = [&]() -> std::vector<Node>& {
        return stack.empty() ? doc.nodes : stack.back().elem.children;
    };

    std::size_t text_begin = 0;
    auto flush_text = [&](std::size_t upto) {
        if (upto > text_begin) {
            sink().push_back(Node::text_node(std::string(input.substr(text_begin, upto - text_begin)),
                                             {text_begin, upto}));
        }
    };

    auto check_canonical = [&](std::size_t begin, std::size_t end, const std::string& canonical) {
        if (input.substr(begin, end - begin) != canonical) {
            doc.diagnostics.push_back({DiagnosticKind::NonCanonicalTag,
                                       {begin, end},
                                       "surface form differs from canonical " + canonical});
        }
    };

    std::size_t pos = 0;
    const std::size_t len = input.size();
    while (pos < len) {
        if (input[pos] != '<') {
            ++pos;
            continue;
        }
        auto lexed = lex_tag(input, pos, policy, doc.diagnostics);
        if (!lexed) {
            ++pos; // literal '<'
            continue;
        }

        if (lexed->is_end) {
            bool open_somewhere = false;
            for (const auto& open : stack) {
                if (open.elem.name == lexed->name) open_somewhere = true;
            }
            if (!open_somewhere) {
                doc.diagnostics.push_back({DiagnosticKind::UnmatchedEndTag,
                                           {pos, lexed->end},
                                           "end tag </" + lexed->name + "> has no open element; kept as text"});
                pos = lexed->end; // bytes stay in the running text
                continue;
            }
            flush_text(pos);
            while (stack.back().elem.name != lexed->name) {
                Open inner = std::move(stack.back());
                stack.pop_back();
                inner.elem.span = {inner.tag_begin, pos};
                doc.diagnostics.push_back({DiagnosticKind::AutoClosedAtEnd,
                                           {inner.tag_begin, pos},
                                           "<" + inner.elem.name + "> auto-closed by </" + lexed->name + ">"});
                sink().push_back(std::move(inner.elem));
            }
            Open matched = std::move(stack.back());
            stack.pop_back();
            matched.elem.span = {matched.tag_begin, lexed->end};
            check_canonical(pos, lexed->end, "</" + lexed->name + ">");
            sink().push_back(std::move(matched.elem));
            pos = lexed->end;
            text_begin = pos;
            continue;
        }

        flush_text(pos);
        if (policy.is_bare(lexed->name)) {
            if (!lexed->attrs.empty()) {
                doc.diagnostics.push_back({DiagnosticKind::MalformedAttribute,
                                           {pos, lexed->end},
                                           "attributes on bare tag <" + lexed->name + "> dropped"});
            } else if (!lexed->duplicate_attr) {
                check_canonical(pos, lexed->end, "<" + lexed->name + ">");
            }
            sink().push_back(Node::bare(lexed->name, {pos, lexed->end}));
        } else {
            if (!lexed->duplicate_attr) {
                check_canonical(pos, lexed->end, canonical_start_tag(lexed->name, lexed->attrs));
            }
            Open open;
            open.elem = Node::element(lexed->name, std::move(lexed->attrs));
            open.tag_begin = pos;
            stack.push_back(std::move(open));
        }
        pos = lexed->end;
        text_begin = pos;
    }

    flush_text(len);
    while (!stack.empty()) {
        Open inner = std::move(stack.back());
        stack.pop_back();
        inner.elem.span = {inner.tag_begin, len};
        doc.diagnostics.push_back({DiagnosticKind::AutoClosedAtEnd,
                                   {inner.tag_begin, len},
                                   "<" + inner.elem.name + "> auto-closed at end of input"});
        sink().push_back(std::move(inner.elem));
    }
    return doc;
}

} // namespace lpml
