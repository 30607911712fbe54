#include "lpml/policy.hpp"

#include <cctype>

namespace lpml {

const TagPolicy& TagPolicy::defaults() {
    static const TagPolicy policy = [] {
        TagPolicy p;
        p.registered = {"DEFINE", "PROBLEM", "ANSWER", "THINK", "PYTHON", "OUTPUT", "EOS"};
        p.bare_capable = {"EOS"};
        p.assistant_allowed = {"THINK", "PYTHON", "ANSWER", "EOS"};
        p.system_allowed = {"DEFINE", "PROBLEM", "OUTPUT", "EOS"};
        return p;
    }();
    return policy;
}

bool TagPolicy::is_registered(std::string_view name) const {
    return registered.contains(name);
}

bool TagPolicy::is_bare(std::string_view name) const {
    return bare_capable.contains(name);
}

bool TagPolicy::allowed_for_assistant(std::string_view name) const {
    return assistant_allowed.contains(name);
}

std::string TagPolicy::canonical(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

bool TagPolicy::valid_name(std::string_view name) {
    if (name.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(name.front()))) return false;
    for (char c : name) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    }
    return true;
}

} // namespace lpml
