#include "lpml/ast.hpp"

namespace lpml {

std::string_view to_string(DiagnosticKind kind) {
    switch (kind) {
    case DiagnosticKind::UnmatchedEndTag: return "UnmatchedEndTag";
    case DiagnosticKind::AutoClosedAtEnd: return "AutoClosedAtEnd";
    case DiagnosticKind::MalformedAttribute: return "MalformedAttribute";
    case DiagnosticKind::NonCanonicalTag: return "NonCanonicalTag";
    }
    return "?";
}

Node Node::text_node(std::string content, SourceSpan span) {
    Node n;
    n.kind = Kind::Text;
    n.text = std::move(content);
    n.span = span;
    return n;
}

Node Node::element(std::string name, std::vector<Attribute> attrs,
                   std::vector<Node> children, SourceSpan span) {
    Node n;
    n.kind = Kind::Element;
    n.name = std::move(name);
    n.attrs = std::move(attrs);
    n.children = std::move(children);
    n.span = span;
    return n;
}

Node Node::bare(std::string name, SourceSpan span) {
    Node n;
    n.kind = Kind::Bare;
    n.name = std::move(name);
    n.span = span;
    return n;
}

const Attribute* Node::find_attr(std::string_view key) const {
    for (const auto& a : attrs) {
        if (a.key == key) return &a;
    }
    return nullptr;
}

} // namespace lpml
