#include "lpml/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <regex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lpml/prompt.hpp"
#include "lpml/serialize.hpp"

namespace lpml {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Content of the last \boxed{...} in the text, brace-matched.
std::optional<std::string> boxed_content(std::string_view text) {
    auto at = text.rfind("\\boxed");
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t pos = at + 6;
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos >= text.size() || text[pos] != '{') {
        // \boxed5 style: take the run up to whitespace or a brace
        std::size_t end = pos;
        while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end])) &&
               text[end] != '}' && text[end] != '$')
            ++end;
        if (end == pos) return std::nullopt;
        return std::string(text.substr(pos, end - pos));
    }
    int depth = 0;
    std::size_t begin = pos + 1;
    for (std::size_t i = pos; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        else if (text[i] == '}') {
            --depth;
            if (depth == 0) return std::string(text.substr(begin, i - begin));
        }
    }
    return std::string(text.substr(begin)); // unterminated; take the rest
}

LoadResult load_gsm8k(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string stem = fs::path(path).stem().string();
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            result.issues.push_back(path + ":" + std::to_string(line_no) + ": not a json object");
            continue;
        }
        if (!record.is_object() || !record.contains("question") || !record.contains("answer") ||
            !record["question"].is_string() || !record["answer"].is_string()) {
            result.issues.push_back(path + ":" + std::to_string(line_no) +
                                    ": missing question/answer fields");
            continue;
        }
        std::string answer = record["answer"].get<std::string>();
        auto marker = answer.rfind("#### ");
        if (marker == std::string::npos) {
            result.issues.push_back(path + ":" + std::to_string(line_no) +
                                    ": answer has no #### line");
            continue;
        }
        char id[64];
        std::snprintf(id, sizeof id, "%s-%04zu", stem.c_str(), line_no);
        result.problems.push_back({id, record["question"].get<std::string>(),
                                   trim_copy(answer.substr(marker + 5))});
    }
    return result;
}

LoadResult load_math_dir(const std::string& path) {
    if (!fs::is_directory(path)) throw std::runtime_error("not a directory: " + path);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(path).generic_string() <
               b.lexically_relative(path).generic_string();
    });
    LoadResult result;
    for (const auto& file : files) {
        std::string rel = file.lexically_relative(path).generic_string();
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::exception&) {
            result.issues.push_back(rel + ": invalid json");
            continue;
        }
        if (!record.is_object() || !record.contains("problem") || !record.contains("solution") ||
            !record["problem"].is_string() || !record["solution"].is_string()) {
            result.issues.push_back(rel + ": missing problem/solution fields");
            continue;
        }
        auto gold = boxed_content(record["solution"].get<std::string>());
        if (!gold) {
            result.issues.push_back(rel + ": solution has no \\boxed answer");
            continue;
        }
        std::string id = rel;
        if (id.size() > 5 && id.ends_with(".json")) id.resize(id.size() - 5);
        result.problems.push_back({id, record["problem"].get<std::string>(), trim_copy(*gold)});
    }
    return result;
}

} // namespace

LoadResult load_problems(const std::string& path, DatasetFormat format) {
    switch (format) {
    case DatasetFormat::Gsm8kJsonl: return load_gsm8k(path);
    case DatasetFormat::MathJsonDir: return load_math_dir(path);
    }
    throw std::logic_error("unknown dataset format");
}

namespace {

Rational make_rational(long long num, long long den) {
    if (den == 0) throw std::invalid_argument("zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    return {num, den};
}

const std::regex kIntPattern(R"(^[+-]?[0-9]+$)");
const std::regex kFractionPattern(R"(^([+-]?[0-9]+)\s*/\s*([+-]?[0-9]+)$)");
const std::regex kFracCommand(R"(^\\[dt]?frac\{([+-]?[0-9]+)\}\{([+-]?[0-9]+)\}$)");
const std::regex kNumberToken(R"([-+]?\$?[0-9][0-9,]*(\.[0-9]+)?(\s*/\s*[0-9]+)?)");

bool parse_longlong(const std::string& s, long long& out) {
    try {
        std::size_t used = 0;
        out = std::stoll(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

std::optional<AnswerValue> numeric_value(std::string s) {
    // thousands separators: only strip commas that sit between digits
    std::string cleaned;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1])))
            continue;
        cleaned += s[i];
    }
    std::smatch m;
    if (std::regex_match(cleaned, kIntPattern)) {
        long long value = 0;
        if (parse_longlong(cleaned, value)) return AnswerValue(Rational{value, 1});
    }
    if (std::regex_match(cleaned, m, kFractionPattern)) {
        long long num = 0;
        long long den = 0;
        if (parse_longlong(m[1].str(), num) && parse_longlong(m[2].str(), den) && den != 0)
            return AnswerValue(make_rational(num, den));
    }
    try {
        std::size_t used = 0;
        double value = std::stod(cleaned, &used);
        if (used == cleaned.size() && std::isfinite(value)) return AnswerValue(Real{value});
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

std::string strip_wrappers(std::string s) {
    for (bool changed = true; changed;) {
        changed = false;
        s = trim_copy(s);
        if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
            s = s.substr(1, s.size() - 2);
            changed = true;
        }
        if (s.size() >= 4 && s.starts_with("\\(") && s.ends_with("\\)")) {
            s = s.substr(2, s.size() - 4);
            changed = true;
        }
        if (s.starts_with("\\text{") && s.ends_with("}")) {
            s = s.substr(6, s.size() - 7);
            changed = true;
        }
        if (s.ends_with("\\%")) {
            s.resize(s.size() - 2);
            changed = true;
        } else if (s.size() >= 2 && s.back() == '%' &&
                   std::isdigit(static_cast<unsigned char>(s[s.size() - 2]))) {
            s.pop_back();
            changed = true;
        }
        if (s.size() >= 2 && s.back() == '.' &&
            std::isdigit(static_cast<unsigned char>(s[s.size() - 2])) &&
            s.find('.') == s.size() - 1) {
            s.pop_back(); // "72." reads as the integer 72
            changed = true;
        }
        if (s.size() >= 2 && s.front() == '$' &&
            std::isdigit(static_cast<unsigned char>(s[1]))) {
            s.erase(0, 1); // currency prefix
            changed = true;
        }
    }
    return s;
}

bool looks_like_prose(const std::string& s) {
    int words = 0;
    int run = 0;
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            ++run;
        } else {
            if (run >= 2) ++words;
            run = 0;
        }
    }
    if (run >= 2) ++words;
    return words >= 2;
}

} // namespace

AnswerValue parse_answer_text(std::string_view text) {
    std::string s = trim_copy(text);
    if (auto boxed = boxed_content(s)) s = trim_copy(*boxed);
    s = strip_wrappers(s);

    std::smatch m;
    if (std::regex_match(s, m, kFracCommand)) {
        long long num = 0;
        long long den = 0;
        if (parse_longlong(m[1].str(), num) && parse_longlong(m[2].str(), den) && den != 0)
            return make_rational(num, den);
    }
    if (auto value = numeric_value(s)) return *value;

    if (looks_like_prose(s)) {
        auto begin = std::sregex_iterator(s.begin(), s.end(), kNumberToken);
        auto end = std::sregex_iterator();
        std::string last;
        for (auto it = begin; it != end; ++it) last = it->str();
        if (!last.empty()) {
            if (last.front() == '$') last.erase(0, 1);
            auto dollar = last.find('$');
            if (dollar != std::string::npos) last.erase(dollar, 1);
            if (auto value = numeric_value(strip_wrappers(last))) return *value;
        }
    }

    std::string collapsed;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) collapsed += c;
    return Literal{std::move(collapsed)};
}

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::NeedsReview: return "needs_review";
    case Verdict::Unsolved: return "unsolved";
    }
    return "unsolved";
}

namespace {

double as_double(const AnswerValue& value) {
    if (const auto* r = std::get_if<Rational>(&value))
        return static_cast<double>(r->num) / static_cast<double>(r->den);
    return std::get<Real>(value).value;
}

bool is_numeric(const AnswerValue& value) { return !std::holds_alternative<Literal>(value); }

} // namespace

Verdict score(const AnswerValue& predicted, const AnswerValue& gold) {
    if (is_numeric(predicted) && is_numeric(gold)) {
        if (std::holds_alternative<Rational>(predicted) && std::holds_alternative<Rational>(gold))
            return std::get<Rational>(predicted) == std::get<Rational>(gold) ? Verdict::Correct
                                                                             : Verdict::Incorrect;
        double a = as_double(predicted);
        double b = as_double(gold);
        double tol = std::max(1e-6, 1e-6 * std::max(std::fabs(a), std::fabs(b)));
        return std::fabs(a - b) <= tol ? Verdict::Correct : Verdict::Incorrect;
    }
    if (std::holds_alternative<Literal>(predicted) && std::holds_alternative<Literal>(gold)) {
        return std::get<Literal>(predicted).text == std::get<Literal>(gold).text
                   ? Verdict::Correct
                   : Verdict::NeedsReview;
    }
    return Verdict::NeedsReview;
}

Verdict grade(std::string_view predicted_text, std::string_view gold_text) {
    return score(parse_answer_text(predicted_text), parse_answer_text(gold_text));
}

std::optional<std::string> extract_answer(const Document& message) {
    auto answers = top_level_elements(message, "ANSWER");
    if (answers.empty()) return std::nullopt;
    std::string text = trim_copy(content_text(*answers.front()));
    if (text.empty()) return std::nullopt;
    return text;
}

double BenchmarkReport::accuracy() const {
    int n = total();
    return n == 0 ? 0.0 : static_cast<double>(correct) / n;
}

std::string BenchmarkReport::to_json() const {
    nlohmann::json results_json = nlohmann::json::array();
    for (const auto& result : results) {
        nlohmann::json j{{"id", result.id},
                         {"gold", result.gold_answer},
                         {"verdict", std::string(to_string(result.verdict))},
                         {"attempts", result.attempts_used},
                         {"turns", result.total_turns}};
        if (result.predicted) j["predicted"] = *result.predicted;
        results_json.push_back(std::move(j));
    }
    nlohmann::json doc{{"total", total()},
                       {"correct", correct},
                       {"incorrect", incorrect},
                       {"needs_review", needs_review},
                       {"unsolved", unsolved},
                       {"accuracy", accuracy()},
                       {"results", std::move(results_json)}};
    return doc.dump(2);
}

std::string BenchmarkReport::render_table() const {
    std::size_t id_width = 2;
    std::size_t pred_width = 9;
    for (const auto& r : results) {
        id_width = std::max(id_width, r.id.size());
        pred_width = std::max(pred_width, r.predicted ? r.predicted->size() : 1);
    }
    id_width = std::min<std::size_t>(id_width, 40);
    pred_width = std::min<std::size_t>(pred_width, 30);

    auto pad = [](std::string s, std::size_t width) {
        if (s.size() > width) {
            s.resize(width - 1);
            s += "~";
        }
        s.resize(width, ' ');
        return s;
    };

    std::ostringstream out;
    out << pad("id", id_width) << "  " << pad("verdict", 12) << "  "
        << pad("predicted", pred_width) << "  gold\n";
    for (const auto& r : results)
        out << pad(r.id, id_width) << "  " << pad(std::string(to_string(r.verdict)), 12) << "  "
            << pad(r.predicted.value_or("-"), pred_width) << "  " << r.gold_answer << '\n';
    char line[160];
    std::snprintf(line, sizeof line,
                  "\n%d problems: %d correct, %d incorrect, %d needs review, %d unsolved "
                  "(accuracy %.1f%%)\n",
                  total(), correct, incorrect, needs_review, unsolved, accuracy() * 100.0);
    out << line;
    return out.str();
}

std::string sanitize_id(std::string_view id) {
    std::string out;
    for (char c : id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')
            out += c;
        else
            out += '_';
    }
    return out.empty() ? "problem" : out;
}

BenchmarkReport run_benchmark(const std::vector<ProblemRecord>& problems,
                              const Orchestrator& orchestrator, Backend& backend,
                              const BenchmarkOptions& options) {
    if (options.transcript_dir) fs::create_directories(*options.transcript_dir);

    std::vector<ProblemResult> results(problems.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        while (!failed.load()) {
            std::size_t i = next.fetch_add(1);
            if (i >= problems.size()) return;
            try {
                const ProblemRecord& record = problems[i];
                Transcript transcript = orchestrator.solve(record.problem, backend);
                ProblemResult result;
                result.id = record.id;
                result.gold_answer = record.gold_answer;
                result.attempts_used = static_cast<int>(transcript.attempts.size());
                for (const auto& attempt : transcript.attempts)
                    result.total_turns += static_cast<int>(attempt.turns.size());
                if (transcript.outcome.solved && transcript.outcome.answer) {
                    result.predicted = transcript.outcome.answer;
                    result.verdict = grade(*result.predicted, record.gold_answer);
                } else {
                    result.verdict = Verdict::Unsolved;
                }
                if (options.transcript_dir)
                    transcript.save(*options.transcript_dir + "/" + sanitize_id(record.id) +
                                    ".json");
                results[i] = std::move(result);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    int threads = std::max(1, options.parallelism);
    threads = static_cast<int>(
        std::min<std::size_t>(threads, std::max<std::size_t>(1, problems.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    BenchmarkReport report;
    report.results = std::move(results);
    for (const auto& result : report.results) {
        switch (result.verdict) {
        case Verdict::Correct: ++report.correct; break;
        case Verdict::Incorrect: ++report.incorrect; break;
        case Verdict::NeedsReview: ++report.needs_review; break;
        case Verdict::Unsolved: ++report.unsolved; break;
        }
    }
    return report;
}

} // namespace lpml
