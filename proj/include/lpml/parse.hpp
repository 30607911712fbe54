#pragma once

#include <string_view>

#include "lpml/ast.hpp"
#include "lpml/policy.hpp"

namespace lpml {

// Total, error-tolerant parse of arbitrary text into an LPML syntax tree.
// Never throws on malformed input; every anomaly becomes a diagnostic.
//
// A `<` starts markup only when it reads as `<NAME ...>` or `</NAME>` for a
// NAME registered in the policy (case-insensitive); any other `<` is literal
// text, so LaTeX like `$1 \le j < i$` survives untouched. Unmatched start
// tags auto-close; unmatched end tags stay literal. Top-level node spans
// partition the input exactly.
Document parse(std::string_view input, const TagPolicy& policy = TagPolicy::defaults());

} // namespace lpml
