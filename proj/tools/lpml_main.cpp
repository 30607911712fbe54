#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpml/eval.hpp"
#include "lpml/exec.hpp"
#include "lpml/gateway.hpp"
#include "lpml/normalize.hpp"
#include "lpml/orchestrate.hpp"
#include "lpml/parse.hpp"
#include "lpml/policy.hpp"
#include "lpml/prompt.hpp"
#include "lpml/serialize.hpp"

#ifndef LPML_DEFAULT_TEMPLATE
#define LPML_DEFAULT_TEMPLATE "fixtures/default_prompt.lpml"
#endif

namespace {

struct Settings {
    std::string endpoint;
    std::string model = "gpt-4";
    std::string template_path = LPML_DEFAULT_TEMPLATE;
    std::string api_key_env = "OPENAI_API_KEY";
    int max_turns = 8;
    int max_attempts = 5;
    double temp_start = 0.0;
    double temp_step = 0.1;
    double timeout = 30.0;
    std::size_t max_output = 64 * 1024;
    std::string interpreter = "python3";
    bool system_as_user = false;
    int parallelism = 1;
};

// Option values as given on the command line; unset means "do not override".
struct Overrides {
    std::optional<std::string> endpoint, model, template_path, api_key_env, interpreter, config;
    std::optional<int> max_turns, max_attempts, parallelism;
    std::optional<double> temp_start, temp_step, timeout;
    std::optional<std::size_t> max_output;
    bool system_as_user = false;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "json config file (lowest-precedence settings)");
    cmd->add_option("--endpoint", o.endpoint, "chat-completions endpoint url");
    cmd->add_option("--model", o.model, "model id sent with each request");
    cmd->add_option("--template", o.template_path, "prompt template file");
    cmd->add_option("--api-key-env", o.api_key_env,
                    "environment variable holding the api key (the key itself is never a flag)");
    cmd->add_option("--max-turns", o.max_turns, "model calls per attempt")->check(CLI::PositiveNumber);
    cmd->add_option("--max-attempts", o.max_attempts, "fresh conversations per problem")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--temp-start", o.temp_start, "temperature of the first attempt");
    cmd->add_option("--temp-step", o.temp_step, "temperature increase per later attempt");
    cmd->add_option("--timeout", o.timeout, "code execution wall-clock limit, seconds");
    cmd->add_option("--max-output", o.max_output, "code execution output cap, bytes");
    cmd->add_option("--interpreter", o.interpreter, "interpreter command (space-separated)");
    cmd->add_flag("--system-as-user", o.system_as_user,
                  "send mid-conversation system messages with role user");
}

void apply_config_file(Settings& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: invalid json: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw std::runtime_error("config: expected a json object");
    for (const auto& [key, value] : doc.items()) {
        if (key == "endpoint") s.endpoint = value.get<std::string>();
        else if (key == "model") s.model = value.get<std::string>();
        else if (key == "template") s.template_path = value.get<std::string>();
        else if (key == "api_key_env") s.api_key_env = value.get<std::string>();
        else if (key == "max_turns") s.max_turns = value.get<int>();
        else if (key == "max_attempts") s.max_attempts = value.get<int>();
        else if (key == "temp_start") s.temp_start = value.get<double>();
        else if (key == "temp_step") s.temp_step = value.get<double>();
        else if (key == "timeout") s.timeout = value.get<double>();
        else if (key == "max_output") s.max_output = value.get<std::size_t>();
        else if (key == "interpreter") s.interpreter = value.get<std::string>();
        else if (key == "system_as_user") s.system_as_user = value.get<bool>();
        else if (key == "parallelism") s.parallelism = value.get<int>();
        else std::cerr << "config: ignoring unknown key: " << key << '\n';
    }
}

void apply_env(Settings& s) {
    auto get = [](const char* name) -> std::optional<std::string> {
        const char* value = std::getenv(name);
        if (value && *value) return std::string(value);
        return std::nullopt;
    };
    if (auto v = get("LPML_ENDPOINT")) s.endpoint = *v;
    if (auto v = get("LPML_MODEL")) s.model = *v;
    if (auto v = get("LPML_TEMPLATE")) s.template_path = *v;
    if (auto v = get("LPML_API_KEY_ENV")) s.api_key_env = *v;
    if (auto v = get("LPML_MAX_TURNS")) s.max_turns = std::stoi(*v);
    if (auto v = get("LPML_MAX_ATTEMPTS")) s.max_attempts = std::stoi(*v);
    if (auto v = get("LPML_TEMP_START")) s.temp_start = std::stod(*v);
    if (auto v = get("LPML_TEMP_STEP")) s.temp_step = std::stod(*v);
    if (auto v = get("LPML_TIMEOUT")) s.timeout = std::stod(*v);
    if (auto v = get("LPML_MAX_OUTPUT")) s.max_output = std::stoull(*v);
    if (auto v = get("LPML_INTERPRETER")) s.interpreter = *v;
    if (auto v = get("LPML_SYSTEM_AS_USER")) s.system_as_user = (*v == "1" || *v == "true");
    if (auto v = get("LPML_PARALLELISM")) s.parallelism = std::stoi(*v);
}

Settings resolve(const Overrides& o, const CLI::App* cmd) {
    Settings s;
    if (o.config) apply_config_file(s, *o.config);
    apply_env(s);
    if (o.endpoint) s.endpoint = *o.endpoint;
    if (o.model) s.model = *o.model;
    if (o.template_path) s.template_path = *o.template_path;
    if (o.api_key_env) s.api_key_env = *o.api_key_env;
    if (o.max_turns) s.max_turns = *o.max_turns;
    if (o.max_attempts) s.max_attempts = *o.max_attempts;
    if (o.temp_start) s.temp_start = *o.temp_start;
    if (o.temp_step) s.temp_step = *o.temp_step;
    if (o.timeout) s.timeout = *o.timeout;
    if (o.max_output) s.max_output = *o.max_output;
    if (o.interpreter) s.interpreter = *o.interpreter;
    if (o.parallelism) s.parallelism = *o.parallelism;
    if (cmd->count("--system-as-user")) s.system_as_user = true;
    return s;
}

std::vector<std::string> split_command(const std::string& command) {
    std::vector<std::string> parts;
    std::istringstream in(command);
    std::string word;
    while (in >> word) parts.push_back(word);
    if (parts.empty()) throw std::runtime_error("interpreter command is empty");
    return parts;
}

std::string read_file_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

lpml::Orchestrator make_orchestrator(const Settings& s) {
    lpml::OrchestratorConfig config;
    config.prompt = lpml::load_template(s.template_path);
    config.limits.wall_clock_timeout = s.timeout;
    config.limits.max_output_bytes = s.max_output;
    config.limits.interpreter_command = split_command(s.interpreter);
    config.loop = {s.max_turns, s.max_attempts, s.temp_start, s.temp_step};
    config.model_id = s.model;
    return lpml::Orchestrator(std::move(config));
}

// Owns whichever backend the flags selected.
struct BackendChoice {
    std::unique_ptr<lpml::Backend> owned;
    lpml::Backend* get() { return owned.get(); }
};

BackendChoice make_backend(const Settings& s, const std::optional<std::string>& scripted_path,
                           bool scripted_repeat, const std::optional<std::string>& cassette_path) {
    BackendChoice choice;
    if (cassette_path) {
        choice.owned = std::make_unique<lpml::ReplayBackend>(lpml::Cassette::load(*cassette_path));
        return choice;
    }
    if (scripted_path) {
        nlohmann::json doc = nlohmann::json::parse(read_file_or_throw(*scripted_path));
        if (!doc.is_array()) throw std::runtime_error("scripted replies: expected a json array");
        std::vector<std::string> replies;
        for (const auto& item : doc) {
            if (!item.is_string())
                throw std::runtime_error("scripted replies: every entry must be a string");
            replies.push_back(item.get<std::string>());
        }
        choice.owned = std::make_unique<lpml::ScriptedBackend>(std::move(replies), scripted_repeat);
        return choice;
    }
    if (!s.endpoint.empty()) {
        const char* key = std::getenv(s.api_key_env.c_str());
        if (!key || !*key)
            throw std::runtime_error("no api key: set the " + s.api_key_env +
                                     " environment variable (or pick another variable with "
                                     "--api-key-env); keys are never passed as flags");
        lpml::HttpBackendConfig config;
        config.endpoint_url = s.endpoint;
        config.api_key = key;
        config.system_as_user = s.system_as_user;
        choice.owned = std::make_unique<lpml::HttpBackend>(std::move(config));
        return choice;
    }
    throw std::runtime_error("no backend selected: pass --endpoint, --scripted, or --cassette");
}

int cmd_solve(const Settings& s, const std::optional<std::string>& problem_text,
              const std::optional<std::string>& problem_file,
              const std::optional<std::string>& scripted_path, bool scripted_repeat,
              const std::optional<std::string>& cassette_path,
              const std::optional<std::string>& record_path) {
    std::string problem;
    if (problem_text) problem = *problem_text;
    else if (problem_file) problem = read_file_or_throw(*problem_file);
    else throw std::runtime_error("pass --problem or --problem-file");

    lpml::Orchestrator orchestrator = make_orchestrator(s);
    BackendChoice backend = make_backend(s, scripted_path, scripted_repeat, cassette_path);
    lpml::Transcript transcript = orchestrator.solve(problem, *backend.get());
    if (record_path) {
        transcript.save(*record_path);
        std::cerr << "transcript written to " << *record_path << '\n';
    }
    if (transcript.outcome.solved) {
        std::cout << transcript.outcome.answer.value_or("") << '\n';
        return 0;
    }
    if (transcript.outcome.reason == lpml::UnsolvedReason::BackendError) {
        std::cerr << "backend error: " << transcript.outcome.error << '\n';
        return 1;
    }
    std::cerr << "unsolved: no answer within " << s.max_attempts << " attempts of " << s.max_turns
              << " turns\n";
    return 2;
}

int cmd_eval(const Settings& s, const std::string& dataset, const std::string& format_name,
             int limit, bool as_json, const std::optional<std::string>& out_path,
             const std::optional<std::string>& transcripts_dir,
             const std::optional<std::string>& scripted_path, bool scripted_repeat,
             const std::optional<std::string>& cassette_path) {
    lpml::DatasetFormat format = format_name == "math" ? lpml::DatasetFormat::MathJsonDir
                                                       : lpml::DatasetFormat::Gsm8kJsonl;
    lpml::LoadResult loaded = lpml::load_problems(dataset, format);
    for (const auto& issue : loaded.issues) std::cerr << "dataset: " << issue << '\n';
    if (limit > 0 && static_cast<std::size_t>(limit) < loaded.problems.size())
        loaded.problems.resize(limit);
    if (loaded.problems.empty()) throw std::runtime_error("dataset has no usable problems");
    std::cerr << "evaluating " << loaded.problems.size() << " problems\n";

    lpml::Orchestrator orchestrator = make_orchestrator(s);
    BackendChoice backend = make_backend(s, scripted_path, scripted_repeat, cassette_path);
    lpml::BenchmarkOptions options;
    options.parallelism = s.parallelism;
    options.transcript_dir = transcripts_dir;
    lpml::BenchmarkReport report =
        lpml::run_benchmark(loaded.problems, orchestrator, *backend.get(), options);

    std::cout << (as_json ? report.to_json() + "\n" : report.render_table());
    if (out_path) {
        std::ofstream out(*out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open: " + *out_path);
        out << report.to_json() << '\n';
        std::cerr << "report written to " << *out_path << '\n';
    }
    return 0;
}

int cmd_replay(const Settings& s, const std::string& transcript_path) {
    lpml::Transcript recorded = lpml::Transcript::load(transcript_path);
    lpml::Orchestrator orchestrator = make_orchestrator(s);
    lpml::Transcript replayed;
    try {
        replayed = orchestrator.replay(recorded);
    } catch (const lpml::FingerprintMismatch& e) {
        std::cerr << "drift: " << e.what() << '\n';
        return 3;
    }
    if (!lpml::same_conversation(recorded, replayed)) {
        std::cerr << "drift: replayed conversation no longer matches the recording\n";
        return 3;
    }
    std::cerr << "replay matches the recording\n";
    if (replayed.outcome.solved) std::cout << replayed.outcome.answer.value_or("") << '\n';
    return 0;
}

int cmd_parse(const std::optional<std::string>& input_path, bool normalize, bool as_json) {
    std::string text;
    if (input_path) {
        text = read_file_or_throw(*input_path);
    } else {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        text = buf.str();
    }
    lpml::Document doc = lpml::parse(text);
    std::vector<lpml::Removal> removals;
    if (normalize) {
        lpml::NormalizedMessage normalized = lpml::normalize_assistant(doc);
        removals = normalized.removals;
        doc.nodes = normalized.doc.nodes;
    }
    std::string serialized = lpml::serialize(doc);

    if (as_json) {
        nlohmann::json diags = nlohmann::json::array();
        for (const auto& d : doc.diagnostics)
            diags.push_back({{"kind", std::string(lpml::to_string(d.kind))},
                             {"begin", d.span.begin},
                             {"end", d.span.end},
                             {"message", d.message}});
        nlohmann::json removals_json = nlohmann::json::array();
        for (const auto& r : removals)
            removals_json.push_back({{"rule", std::string(lpml::to_string(r.rule))},
                                     {"begin", r.span.begin},
                                     {"end", r.span.end},
                                     {"excerpt", r.excerpt}});
        nlohmann::json out{{"serialized", serialized},
                           {"diagnostics", std::move(diags)},
                           {"removals", std::move(removals_json)}};
        std::cout << out.dump(2) << '\n';
        return 0;
    }
    for (const auto& d : doc.diagnostics)
        std::cerr << lpml::to_string(d.kind) << " [" << d.span.begin << "," << d.span.end
                  << "): " << d.message << '\n';
    for (const auto& r : removals)
        std::cerr << "removed " << lpml::to_string(r.rule) << " [" << r.span.begin << ","
                  << r.span.end << "): " << r.excerpt << '\n';
    std::cout << serialized;
    if (!serialized.empty() && serialized.back() != '\n') std::cout << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"markup-driven llm problem solving with sandboxed python feedback"};
    app.require_subcommand(1);

    Overrides solve_opts;
    std::optional<std::string> problem_text, problem_file, solve_scripted, solve_cassette, record_path;
    bool solve_scripted_repeat = false;
    CLI::App* solve = app.add_subcommand("solve", "solve one problem interactively");
    add_common_options(solve, solve_opts);
    solve->add_option("--problem", problem_text, "problem statement");
    solve->add_option("--problem-file", problem_file, "file holding the problem statement");
    solve->add_option("--scripted", solve_scripted, "json array of canned replies (offline backend)");
    solve->add_flag("--scripted-repeat", solve_scripted_repeat,
                    "repeat the last canned reply forever");
    solve->add_option("--cassette", solve_cassette, "replay requests from a recorded cassette");
    solve->add_option("--record", record_path, "write the full transcript (with cassette) here");

    Overrides eval_opts;
    std::string dataset, format_name = "gsm8k";
    std::optional<std::string> eval_scripted, eval_cassette, out_path, transcripts_dir;
    bool eval_scripted_repeat = false;
    bool eval_json = false;
    int limit = 0;
    CLI::App* eval = app.add_subcommand("eval", "run a dataset and grade the answers");
    add_common_options(eval, eval_opts);
    eval->add_option("--dataset", dataset, "dataset path")->required();
    eval->add_option("--format", format_name, "dataset format")
        ->check(CLI::IsMember({"gsm8k", "math"}));
    eval->add_option("--limit", limit, "evaluate only the first N problems");
    eval->add_option("--parallelism", eval_opts.parallelism, "worker threads")
        ->check(CLI::PositiveNumber);
    eval->add_flag("--json", eval_json, "print the json report instead of the table");
    eval->add_option("--out", out_path, "also write the json report to this file");
    eval->add_option("--transcripts-dir", transcripts_dir, "save one transcript per problem");
    eval->add_option("--scripted", eval_scripted, "json array of canned replies (offline backend)");
    eval->add_flag("--scripted-repeat", eval_scripted_repeat, "repeat the last canned reply forever");
    eval->add_option("--cassette", eval_cassette, "replay requests from a recorded cassette");

    Overrides replay_opts;
    std::string transcript_path;
    CLI::App* replay = app.add_subcommand("replay", "re-run a saved transcript and check for drift");
    add_common_options(replay, replay_opts);
    replay->add_option("transcript", transcript_path, "saved transcript file")->required();

    std::optional<std::string> parse_input;
    bool parse_normalize = false;
    bool parse_json = false;
    CLI::App* parse_cmd = app.add_subcommand("parse", "parse markup and print the canonical form");
    parse_cmd->add_option("--input", parse_input, "input file (stdin when omitted)");
    parse_cmd->add_flag("--normalize", parse_normalize, "apply assistant-message normalization");
    parse_cmd->add_flag("--json", parse_json, "emit a json report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(solve))
            return cmd_solve(resolve(solve_opts, solve), problem_text, problem_file, solve_scripted,
                             solve_scripted_repeat, solve_cassette, record_path);
        if (app.got_subcommand(eval))
            return cmd_eval(resolve(eval_opts, eval), dataset, format_name, limit, eval_json,
                            out_path, transcripts_dir, eval_scripted, eval_scripted_repeat,
                            eval_cassette);
        if (app.got_subcommand(replay))
            return cmd_replay(resolve(replay_opts, replay), transcript_path);
        if (app.got_subcommand(parse_cmd))
            return cmd_parse(parse_input, parse_normalize, parse_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
