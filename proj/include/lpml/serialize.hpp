#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lpml/ast.hpp"

namespace lpml {

// Canonical surface syntax: uppercase tag names, attributes as key="value"
// in insertion order, text verbatim, bare tags as <NAME>. For a document
// parsed with zero diagnostics this reproduces the input byte-for-byte.
std::string serialize(const Document& doc);
std::string serialize(const Node& node);

// Top-level Element/Bare nodes with the given canonical name, in document
// order. Does not descend into children.
std::vector<const Node*> top_level_elements(const Document& doc, std::string_view name);

// The element's content as surface text (nested markup re-serialized).
// This is what execution and answer extraction operate on.
std::string content_text(const Node& element);

} // namespace lpml
