#pragma once

// Deterministic random inputs for property and fuzz tests. Seeds are fixed
// by the callers so failures reproduce.

#include <random>
#include <string>
#include <vector>

#include "lpml/ast.hpp"
#include "lpml/parse.hpp"

namespace testgen {

// Text that can never collide with the registered vocabulary: '<' appears
// only in front of things the lexer must treat as literal.
inline std::string random_text(std::mt19937& rng) {
    static const std::vector<std::string> pieces = {
        "solve for x",
        "1 < 2 and 3 > 2",
        "$\\frac{1}{2}$",
        "a<b, b<c",
        "<notatag>",
        "</wat>",
        "x <= y",
        "\\[\\sum_{1 \\le j < i} 2^{-i-j}\\]",
        "price is $5.",
        "line one\nline two",
        "  padded  ",
        "42",
        "f(x) = x^2 - 1",
        "<3",
        "caf\xc3\xa9",
        "10a + b = a + b + ab",
    };
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> extra(0, 2);
    std::string out = pieces[pick(rng)];
    for (int i = extra(rng); i > 0; --i) out += " " + pieces[pick(rng)];
    return out;
}

inline std::string random_attr_value(std::mt19937& rng) {
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ._-";
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string out;
    for (int i = len(rng); i > 0; --i) out += alphabet[pick(rng)];
    return out;
}

inline lpml::Node random_element(std::mt19937& rng, int depth);

// A run of sibling nodes with no two adjacent text nodes (the parser merges
// adjacent text, so a tree with them could never come back identical).
inline std::vector<lpml::Node> random_children(std::mt19937& rng, int depth, int max_count) {
    std::uniform_int_distribution<int> count(0, max_count);
    std::uniform_int_distribution<int> kind(0, 5);
    std::vector<lpml::Node> nodes;
    bool last_was_text = false;
    for (int i = count(rng); i > 0; --i) {
        int k = kind(rng);
        if (k <= 2 && !last_was_text) {
            nodes.push_back(lpml::Node::text_node(random_text(rng)));
            last_was_text = true;
        } else if (k == 3) {
            nodes.push_back(lpml::Node::bare("EOS"));
            last_was_text = false;
        } else {
            nodes.push_back(random_element(rng, depth));
            last_was_text = false;
        }
    }
    return nodes;
}

inline lpml::Node random_element(std::mt19937& rng, int depth) {
    static const std::vector<std::string> names = {"DEFINE", "PROBLEM", "ANSWER",
                                                   "THINK",  "PYTHON",  "OUTPUT"};
    static const std::vector<std::string> keys = {"type", "name", "tool", "id"};
    std::uniform_int_distribution<std::size_t> pick_name(0, names.size() - 1);
    std::uniform_int_distribution<int> attr_count(0, 2);
    std::uniform_int_distribution<std::size_t> pick_key(0, keys.size() - 1);

    std::vector<lpml::Attribute> attrs;
    std::vector<std::string> used;
    for (int i = attr_count(rng); i > 0; --i) {
        std::string key = keys[pick_key(rng)];
        bool seen = false;
        for (const auto& u : used) seen = seen || u == key;
        if (seen) continue;
        used.push_back(key);
        attrs.push_back({key, random_attr_value(rng)});
    }
    std::vector<lpml::Node> children;
    if (depth > 0) children = random_children(rng, depth - 1, 3);
    return lpml::Node::element(names[pick_name(rng)], std::move(attrs), std::move(children));
}

// A well-formed document; its canonical serialization parses back clean.
inline lpml::Document random_document(std::mt19937& rng) {
    lpml::Document doc;
    doc.nodes = random_children(rng, 2, 6);
    return doc;
}

// Hostile bytes: tag fragments, case drift, broken attributes, stray
// unicode, everything the parser has to absorb without crashing.
inline std::string random_fuzz_input(std::mt19937& rng) {
    static const std::vector<std::string> tokens = {
        "<THINK>", "</THINK>", "<PYTHON>", "</PYTHON>", "<ANSWER>", "</ANSWER>",
        "<EOS>", "</EOS>", "<DEFINE", "<DEFINE type=\"tag\"", "type=", "name=\"x\"",
        "<OUTPUT tool=\"PYTHON\">", "</OUTPUT>", "<", ">", "\"", "=", "/", "</",
        "<Think>", "<think>", "<THINK ", "<PYTHON a=\"unterminated", "<EOS x=\"1\">",
        "<ANSWER><ANSWER>", "</PROBLEM></PROBLEM>", "text", " ", "\n", "\t",
        "$x<y$", "\\frac{1}{2}", "caf\xc3\xa9", "\xff\xfe", "\x00", "<NOPE>",
        "a=b", "''", "< THINK>", "<THINK\n>", "<PYTHON></THINK>",
    };
    std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
    std::uniform_int_distribution<int> len(0, 24);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> mode(0, 9);
    std::string out;
    for (int i = len(rng); i > 0; --i) {
        if (mode(rng) == 0)
            out += static_cast<char>(byte(rng));
        else
            out += tokens[pick(rng)];
    }
    return out;
}

// Structural equality that ignores source spans (generated trees have none).
inline bool same_shape(const lpml::Node& a, const lpml::Node& b) {
    if (a.kind != b.kind || a.name != b.name || a.text != b.text || a.attrs != b.attrs ||
        a.children.size() != b.children.size())
        return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!same_shape(a.children[i], b.children[i])) return false;
    return true;
}

inline bool same_shape(const std::vector<lpml::Node>& a, const std::vector<lpml::Node>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!same_shape(a[i], b[i])) return false;
    return true;
}

// Checks the span discipline the parser promises: top-level spans partition
// the input, children stay inside their parent and tile left to right, and
// every text node's span slices back to its own text.
inline bool spans_consistent(const std::vector<lpml::Node>& nodes, std::string_view input,
                             std::size_t begin, std::size_t end, bool top_level) {
    std::size_t cursor = begin;
    for (const auto& node : nodes) {
        if (node.span.begin != cursor || node.span.end < node.span.begin ||
            node.span.end > end)
            return false;
        if (node.kind == lpml::Node::Kind::Text) {
            if (input.substr(node.span.begin, node.span.end - node.span.begin) != node.text)
                return false;
        }
        if (!node.children.empty()) {
            std::size_t inner_begin = node.children.front().span.begin;
            std::size_t inner_end = node.children.back().span.end;
            if (inner_begin < node.span.begin || inner_end > node.span.end) return false;
            if (!spans_consistent(node.children, input, inner_begin, inner_end, false))
                return false;
        }
        cursor = node.span.end;
    }
    if (top_level) return cursor == end;
    return true;
}

inline bool spans_consistent(const lpml::Document& doc, std::string_view input) {
    return spans_consistent(doc.nodes, input, 0, input.size(), true);
}

} // namespace testgen
