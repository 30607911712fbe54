#include "lpml/prompt.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lpml/parse.hpp"
#include "lpml/serialize.hpp"

namespace lpml {

std::string trim_copy(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

PromptTemplate parse_template(std::string_view text, const TagPolicy& policy) {
    Document doc = parse(text, policy);
    PromptTemplate tmpl;
    bool saw_greeting = false;

    for (const auto& node : doc.nodes) {
        if (!node.is_element()) continue;
        if (node.name == "DEFINE") {
            const Attribute* type = node.find_attr("type");
            if (!type) throw std::runtime_error("template: DEFINE element without type attribute");
            if (type->value == "rule") {
                RuleDefinition rule;
                if (const Attribute* role = node.find_attr("role")) rule.role = role->value;
                rule.body = content_text(node);
                if (trim_copy(rule.body).empty()) {
                    throw std::runtime_error("template: rule DEFINE with empty body");
                }
                tmpl.rules.push_back(std::move(rule));
            } else if (type->value == "tag") {
                const Attribute* name = node.find_attr("name");
                if (!name) throw std::runtime_error("template: tag DEFINE without name attribute");
                std::string canonical = TagPolicy::canonical(name->value);
                if (!policy.is_registered(canonical)) {
                    throw std::runtime_error("template: tag DEFINE for unregistered tag " + canonical);
                }
                tmpl.tags.push_back({std::move(canonical), content_text(node)});
            } else {
                throw std::runtime_error("template: DEFINE with unknown type '" + type->value + "'");
            }
        } else if (node.name == "OUTPUT") {
            tmpl.greeting = content_text(node);
            saw_greeting = true;
        } else if (node.name == "PROBLEM") {
            throw std::runtime_error("template: PROBLEM belongs to the solve call, not the template");
        }
    }
    if (!saw_greeting) throw std::runtime_error("template: missing OUTPUT greeting element");
    return tmpl;
}

PromptTemplate load_template(const std::string& path, const TagPolicy& policy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("template: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_template(buf.str(), policy);
}

namespace {

// Element content is parsed rather than stored as one text node so that a
// rebuilt document re-parses to the identical tree even when a body embeds
// markup (the assistant rule's <PYTHON>code</PYTHON><EOS> illustration).
Node content_element(std::string name, std::vector<Attribute> attrs, std::string_view content,
                     const TagPolicy& policy) {
    Document parsed = parse(content, policy);
    return Node::element(std::move(name), std::move(attrs), std::move(parsed.nodes));
}

} // namespace

Document build_initial_prompt(std::string_view problem, const PromptTemplate& tmpl) {
    if (trim_copy(problem).empty()) {
        throw std::invalid_argument("build_initial_prompt: empty problem text");
    }
    const TagPolicy& policy = TagPolicy::defaults();

    Document doc;
    bool previous_was_tag_define = false;
    auto append = [&](Node node, bool is_tag_define = false) {
        if (!doc.nodes.empty()) {
            // Tag definitions sit on consecutive lines; every other block
            // gets a blank line.
            const char* sep = (previous_was_tag_define && is_tag_define) ? "\n" : "\n\n";
            doc.nodes.push_back(Node::text_node(sep));
        }
        doc.nodes.push_back(std::move(node));
        previous_was_tag_define = is_tag_define;
    };

    for (const auto& rule : tmpl.rules) {
        if (rule.role) continue;
        append(content_element("DEFINE", {{"type", "rule"}}, rule.body, policy));
    }
    for (const auto& tag : tmpl.tags) {
        append(content_element("DEFINE", {{"type", "tag"}, {"name", tag.name}}, tag.description, policy),
               /*is_tag_define=*/true);
    }
    for (const auto& rule : tmpl.rules) {
        if (!rule.role) continue;
        append(content_element("DEFINE", {{"type", "rule"}, {"role", *rule.role}}, rule.body, policy));
    }
    append(content_element("PROBLEM", {}, problem, policy));
    append(content_element("OUTPUT", {}, tmpl.greeting, policy));
    append(Node::bare("EOS"));
    return doc;
}

} // namespace lpml
