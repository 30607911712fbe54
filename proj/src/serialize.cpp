#include "lpml/serialize.hpp"

#include "lpml/policy.hpp"

namespace lpml {

namespace {

void serialize_into(const Node& node, std::string& out) {
    switch (node.kind) {
    case Node::Kind::Text:
        out += node.text;
        break;
    case Node::Kind::Bare:
        out += '<';
        out += node.name;
        out += '>';
        break;
    case Node::Kind::Element:
        out += '<';
        out += node.name;
        for (const auto& attr : node.attrs) {
            out += ' ';
            out += attr.key;
            out += "=\"";
            out += attr.value;
            out += '"';
        }
        out += '>';
        for (const auto& child : node.children) serialize_into(child, out);
        out += "</";
        out += node.name;
        out += '>';
        break;
    }
}

} // namespace

std::string serialize(const Node& node) {
    std::string out;
    serialize_into(node, out);
    return out;
}

std::string serialize(const Document& doc) {
    std::string out;
    for (const auto& node : doc.nodes) serialize_into(node, out);
    return out;
}

std::vector<const Node*> top_level_elements(const Document& doc, std::string_view name) {
    const std::string canonical = TagPolicy::canonical(name);
    std::vector<const Node*> out;
    for (const auto& node : doc.nodes) {
        if (!node.is_text() && node.name == canonical) out.push_back(&node);
    }
    return out;
}

std::string content_text(const Node& element) {
    std::string out;
    for (const auto& child : element.children) serialize_into(child, out);
    return out;
}

} // namespace lpml
