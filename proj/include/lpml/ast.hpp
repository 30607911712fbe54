#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lpml {

// Half-open byte range into the original input.
struct SourceSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }
    bool operator==(const SourceSpan&) const = default;
};

struct Attribute {
    std::string key;
    std::string value;

    bool operator==(const Attribute&) const = default;
};

enum class DiagnosticKind {
    UnmatchedEndTag,    // end tag with no open element of that name; kept as literal text
    AutoClosedAtEnd,    // start tag implicitly closed (end of input or enclosing end tag)
    MalformedAttribute, // attribute syntax inside a candidate tag could not be parsed
    NonCanonicalTag,    // tag recognized but its surface form differs from canonical output
};

std::string_view to_string(DiagnosticKind kind);

struct ParseDiagnostic {
    DiagnosticKind kind;
    SourceSpan span;
    std::string message;
};

// One node of the LPML syntax tree. A tagged struct rather than a variant:
// tree walks stay flat and the three shapes share the span field.
struct Node {
    enum class Kind { Text, Element, Bare };

    Kind kind = Kind::Text;
    std::string name;               // Element/Bare: canonical (uppercase) tag name
    std::string text;               // Text only
    std::vector<Attribute> attrs;   // Element only
    std::vector<Node> children;     // Element only
    SourceSpan span;

    static Node text_node(std::string content, SourceSpan span = {});
    static Node element(std::string name, std::vector<Attribute> attrs = {},
                        std::vector<Node> children = {}, SourceSpan span = {});
    static Node bare(std::string name, SourceSpan span = {});

    bool is_text() const { return kind == Kind::Text; }
    bool is_element() const { return kind == Kind::Element; }
    bool is_bare() const { return kind == Kind::Bare; }

    // nullptr when the element carries no attribute with this key.
    const Attribute* find_attr(std::string_view key) const;

    bool operator==(const Node&) const = default;
};

struct Document {
    std::vector<Node> nodes;
    std::vector<ParseDiagnostic> diagnostics;

    bool clean() const { return diagnostics.empty(); }
};

} // namespace lpml
