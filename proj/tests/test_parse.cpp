#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "lpml/parse.hpp"
#include "lpml/serialize.hpp"

using namespace lpml;

namespace {

bool has_kind(const Document& doc, DiagnosticKind kind) {
    for (const auto& d : doc.diagnostics)
        if (d.kind == kind) return true;
    return false;
}

} // namespace

TEST_CASE("plain text is one text node") {
    Document doc = parse("just words, no markup");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].is_text());
    CHECK(doc.nodes[0].text == "just words, no markup");
    CHECK(doc.clean());
}

TEST_CASE("empty input parses to an empty document") {
    Document doc = parse("");
    CHECK(doc.nodes.empty());
    CHECK(doc.clean());
}

TEST_CASE("simple element with text content") {
    Document doc = parse("<THINK>step one</THINK>");
    REQUIRE(doc.nodes.size() == 1);
    const Node& think = doc.nodes[0];
    CHECK(think.is_element());
    CHECK(think.name == "THINK");
    REQUIRE(think.children.size() == 1);
    CHECK(think.children[0].text == "step one");
    CHECK(doc.clean());
}

TEST_CASE("attributes are parsed and ordered") {
    Document doc = parse(R"(<DEFINE type="tag" name="THINK">x</DEFINE>)");
    REQUIRE(doc.nodes.size() == 1);
    const Node& define = doc.nodes[0];
    REQUIRE(define.attrs.size() == 2);
    CHECK(define.attrs[0].key == "type");
    CHECK(define.attrs[0].value == "tag");
    CHECK(define.attrs[1].key == "name");
    CHECK(define.attrs[1].value == "THINK");
    CHECK(define.find_attr("name")->value == "THINK");
    CHECK(define.find_attr("missing") == nullptr);
    CHECK(doc.clean());
}

TEST_CASE("EOS is a bare element and takes no end tag") {
    Document doc = parse("before<EOS>after");
    REQUIRE(doc.nodes.size() == 3);
    CHECK(doc.nodes[0].text == "before");
    CHECK(doc.nodes[1].is_bare());
    CHECK(doc.nodes[1].name == "EOS");
    CHECK(doc.nodes[2].text == "after");
    CHECK(doc.clean());
}

TEST_CASE("unregistered tags stay literal text") {
    std::string input = "<muffin>hi</muffin> and <var> too";
    Document doc = parse(input);
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].text == input);
    CHECK(doc.clean());
}

TEST_CASE("math with comparison operators survives untouched") {
    std::string input = "if $x<y$ and y<z then \\[x<z\\] for 1<2<3";
    Document doc = parse(input);
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].text == input);
    CHECK(doc.clean());
    CHECK(serialize(doc) == input);
}

TEST_CASE("latex in element content is preserved byte for byte") {
    std::string input = "<THINK>\\[\\sum_{1 \\le j < i} \\frac{1}{2^{i+j}}\\] so x < 1</THINK>";
    Document doc = parse(input);
    CHECK(doc.clean());
    CHECK(serialize(doc) == input);
    REQUIRE(doc.nodes.size() == 1);
    REQUIRE(doc.nodes[0].children.size() == 1);
    CHECK(doc.nodes[0].children[0].text ==
          "\\[\\sum_{1 \\le j < i} \\frac{1}{2^{i+j}}\\] so x < 1");
}

TEST_CASE("nested elements") {
    Document doc = parse("<OUTPUT><PYTHON>code</PYTHON>rest</OUTPUT>");
    REQUIRE(doc.nodes.size() == 1);
    const Node& output = doc.nodes[0];
    REQUIRE(output.children.size() == 2);
    CHECK(output.children[0].name == "PYTHON");
    CHECK(output.children[1].text == "rest");
    CHECK(doc.clean());
}

TEST_CASE("lowercase tag is recognized with a NonCanonicalTag diagnostic") {
    Document doc = parse("<think>x</think>");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].name == "THINK");
    CHECK(has_kind(doc, DiagnosticKind::NonCanonicalTag));
    CHECK(serialize(doc) == "<THINK>x</THINK>");
}

TEST_CASE("whitespace inside a tag is tolerated but flagged") {
    Document doc = parse("<THINK >x</THINK>");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].name == "THINK");
    CHECK(has_kind(doc, DiagnosticKind::NonCanonicalTag));
}

TEST_CASE("unclosed element is auto-closed at end of input") {
    Document doc = parse("<PYTHON>print(1)");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].name == "PYTHON");
    REQUIRE(doc.nodes[0].children.size() == 1);
    CHECK(doc.nodes[0].children[0].text == "print(1)");
    REQUIRE(doc.diagnostics.size() == 1);
    CHECK(doc.diagnostics[0].kind == DiagnosticKind::AutoClosedAtEnd);
}

TEST_CASE("crossing end tag auto-closes the inner element") {
    Document doc = parse("<THINK><PYTHON>code</THINK>");
    REQUIRE(doc.nodes.size() == 1);
    const Node& think = doc.nodes[0];
    CHECK(think.name == "THINK");
    REQUIRE(think.children.size() == 1);
    CHECK(think.children[0].name == "PYTHON");
    CHECK(has_kind(doc, DiagnosticKind::AutoClosedAtEnd));
}

TEST_CASE("unmatched end tag stays literal") {
    Document doc = parse("a</THINK>b");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].text == "a</THINK>b");
    REQUIRE(doc.diagnostics.size() == 1);
    CHECK(doc.diagnostics[0].kind == DiagnosticKind::UnmatchedEndTag);
}

TEST_CASE("malformed attribute leaves the bracket literal") {
    std::string input = "<DEFINE type=>x";
    Document doc = parse(input);
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].text == input);
    CHECK(has_kind(doc, DiagnosticKind::MalformedAttribute));
}

TEST_CASE("unterminated attribute value leaves the bracket literal") {
    std::string input = "<DEFINE type=\"tag>x";
    Document doc = parse(input);
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].is_text());
    CHECK(has_kind(doc, DiagnosticKind::MalformedAttribute));
}

TEST_CASE("duplicate attribute keeps the first value") {
    Document doc = parse(R"(<DEFINE type="a" type="b">x</DEFINE>)");
    REQUIRE(doc.nodes.size() == 1);
    REQUIRE(doc.nodes[0].attrs.size() == 1);
    CHECK(doc.nodes[0].attrs[0].value == "a");
    CHECK(has_kind(doc, DiagnosticKind::MalformedAttribute));
}

TEST_CASE("attributes on a bare tag are dropped with a diagnostic") {
    Document doc = parse(R"(<EOS x="1">)");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].is_bare());
    CHECK(doc.nodes[0].attrs.empty());
    CHECK(has_kind(doc, DiagnosticKind::MalformedAttribute));
}

TEST_CASE("end tag for a bare name is not markup") {
    Document doc = parse("</EOS>");
    REQUIRE(doc.nodes.size() == 1);
    CHECK(doc.nodes[0].is_text());
}

TEST_CASE("registered names are the whole vocabulary") {
    Document doc = parse("<THINK>a</THINK><FAKE>b</FAKE><PYTHON>c</PYTHON>");
    REQUIRE(doc.nodes.size() == 3);
    CHECK(doc.nodes[0].name == "THINK");
    CHECK(doc.nodes[1].is_text());
    CHECK(doc.nodes[1].text == "<FAKE>b</FAKE>");
    CHECK(doc.nodes[2].name == "PYTHON");
}

TEST_CASE("top-level spans partition the input") {
    std::string input = "pre<THINK>a<EOS>b</THINK>post<PYTHON>x";
    Document doc = parse(input);
    CHECK(testgen::spans_consistent(doc, input));
}

TEST_CASE("custom policy changes the vocabulary") {
    TagPolicy policy;
    policy.registered = {"FOO", "BAR"};
    policy.bare_capable = {"BAR"};
    Document doc = parse("<FOO>x<BAR></FOO><THINK>y</THINK>", policy);
    REQUIRE(doc.nodes.size() == 2);
    CHECK(doc.nodes[0].name == "FOO");
    REQUIRE(doc.nodes[0].children.size() == 2);
    CHECK(doc.nodes[0].children[1].is_bare());
    CHECK(doc.nodes[1].is_text());
    CHECK(doc.nodes[1].text == "<THINK>y</THINK>");
}

TEST_CASE("property: generated documents round-trip through parse") {
    std::mt19937 rng(20240817);
    for (int i = 0; i < 500; ++i) {
        Document generated = testgen::random_document(rng);
        std::string wire = serialize(generated);
        Document parsed = parse(wire);
        CAPTURE(wire);
        REQUIRE(parsed.clean());
        CHECK(testgen::same_shape(parsed.nodes, generated.nodes));
        CHECK(serialize(parsed) == wire);
        CHECK(testgen::spans_consistent(parsed, wire));
    }
}

TEST_CASE("property: clean parses serialize back to the input") {
    std::mt19937 rng(77);
    int clean_count = 0;
    for (int i = 0; i < 2000; ++i) {
        std::string input = testgen::random_fuzz_input(rng);
        Document doc = parse(input);
        CAPTURE(input);
        CHECK(testgen::spans_consistent(doc, input));
        if (doc.clean()) {
            ++clean_count;
            CHECK(serialize(doc) == input);
        }
    }
    CHECK(clean_count > 0);
}

TEST_CASE("fuzz: the parser is total on hostile bytes") {
    std::mt19937 rng(424242);
    for (int i = 0; i < 2000; ++i) {
        std::string input = testgen::random_fuzz_input(rng);
        Document doc = parse(input);
        CAPTURE(input);
        CHECK(testgen::spans_consistent(doc, input));
        for (const auto& node : doc.nodes)
            if (!node.is_text()) {
                CHECK(TagPolicy::defaults().is_registered(node.name));
            }
    }
}
