// promptgrid: two-stage diagnostic for two-agent prompt pipelines.
//
// Stage 1 measures whether the agents' prompts interact (question-blocked
// two-way variance decomposition over an exhaustive prompt grid); stage 2
// measures whether prompt optimization is worth attempting at all (headroom
// test). A structured evolutionary optimizer and a budget simulator round out
// the toolkit. Everything runs offline against the deterministic mock
// backend; point [executor] at an HTTP chat-completion endpoint for real
// runs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "promptgrid/anova.hpp"
#include "promptgrid/evolution.hpp"
#include "promptgrid/grid.hpp"
#include "promptgrid/headroom.hpp"
#include "promptgrid/landscape.hpp"
#include "promptgrid/report.hpp"
#include "promptgrid/stats.hpp"
#include "promptgrid/tensor.hpp"
#include "promptgrid/transformer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace promptgrid;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string prompt_from_json(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_object()) {
        StructuredPrompt p;
        for (auto name : StructuredPrompt::component_names) {
            const std::string key(name);
            if (j.contains(key)) p.component(name) = j.at(key).get<std::string>();
        }
        if (p.task.empty()) throw Error("structured prompt objects need a non-empty \"task\"");
        return p.flatten();
    }
    throw Error("prompts must be strings or structured-prompt objects");
}

// Prompt list file: JSON array of strings or structured-prompt objects.
std::vector<std::string> read_prompt_list(const fs::path& path) {
    const json j = json::parse(read_file(path));
    if (!j.is_array()) throw Error(path.string() + ": expected a JSON array of prompts");
    std::vector<std::string> prompts;
    for (const auto& entry : j) prompts.push_back(prompt_from_json(entry));
    return prompts;
}

// Single prompt: .json (string/object) or raw text.
std::string read_single_prompt(const fs::path& path) {
    const std::string raw = read_file(path);
    if (path.extension() == ".json") return prompt_from_json(json::parse(raw));
    std::string text = raw;
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    if (text.empty()) throw EmptyPromptError(path.string() + " holds no prompt text");
    return text;
}

// Questions: JSONL of {"id": str, "input": str}.
std::vector<Question> read_questions(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<Question> questions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        questions.push_back({rec.at("id").get<std::string>(), rec.at("input").get<std::string>()});
    }
    if (questions.empty()) throw Error(path.string() + " holds no questions");
    return questions;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path.string());
    out << text;
}

ScoreTensor load_tensor_arg(const std::string& tensor_path, const std::string& dims_arg) {
    if (dims_arg.empty()) return load_tensor(tensor_path);
    Dims dims;
    if (std::sscanf(dims_arg.c_str(), "%d,%d,%d", &dims.ka, &dims.kb, &dims.n) != 3) {
        throw Error("--dims expects ka,kb,n");
    }
    return load_tensor(tensor_path, dims);
}

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string out_dir;
    bool json_output = false;
    std::string rubric_file;
    std::string transformer_kind = "auto";  // auto | rule | llm
};

struct CliState {
    GlobalOptions global;
    ExecutorConfig executor;
    EvolutionConfig prose;
    double coupling_alpha = 0.05;
    double headroom_threshold = 2.0;

    fs::path out(const char* fallback) const {
        return global.out_dir.empty() ? fs::path(fallback) : fs::path(global.out_dir);
    }
    std::string rubric() const {
        return global.rubric_file.empty() ? std::string{} : read_file(global.rubric_file);
    }
    std::unique_ptr<PromptTransformer> make_transformer(Executor& exec) const {
        const bool llm = global.transformer_kind == "llm" ||
                         (global.transformer_kind == "auto" && exec.config().backend == "http");
        if (llm) return std::make_unique<LlmTransformer>(exec);
        return std::make_unique<RuleTransformer>();
    }
};

void add_config_options(CLI::App& app, CliState& state) {
    app.add_option("--seed", state.global.seed, "Seed for all randomized steps");
    app.add_option("--out", state.global.out_dir, "Output directory");
    app.add_flag("--json", state.global.json_output, "Emit machine-readable JSON on stdout");
    app.add_option("--rubric", state.global.rubric_file, "Judge rubric text file");
    app.add_option("--transformer", state.global.transformer_kind,
                   "Prompt transformer backend: auto|rule|llm")
        ->check(CLI::IsMember({"auto", "rule", "llm"}));

    auto* executor = app.add_option_group("executor", "Executor backend ([executor] in config)");
    executor->add_option("--executor.backend", state.executor.backend, "mock | http");
    executor->add_option("--executor.endpoint", state.executor.endpoint);
    executor->add_option("--executor.model_id", state.executor.model_id);
    executor->add_option("--executor.api_key_env", state.executor.api_key_env);
    executor->add_option("--executor.timeout", state.executor.timeout_seconds);
    executor->add_option("--executor.max_retries", state.executor.max_retries);
    executor->add_option("--executor.retry_backoff", state.executor.retry_backoff_seconds);
    executor->add_option("--executor.temperature", state.executor.temperature);
    executor->add_option("--executor.max_tokens", state.executor.max_tokens);
    executor->add_option("--executor.max_concurrency", state.executor.max_concurrency);
    executor->add_option("--executor.mock_seed", state.executor.mock_seed);
    executor->add_option("--executor.mock_base", state.executor.mock_base);
    executor->add_option("--executor.mock_question_sd", state.executor.mock_question_sd);
    executor->add_option("--executor.mock_prompt_sd", state.executor.mock_prompt_sd);
    executor->add_option("--executor.mock_interaction_sd", state.executor.mock_interaction_sd);
    executor->add_option("--executor.mock_noise_sd", state.executor.mock_noise_sd);
    executor->add_option("--executor.mock_marker", state.executor.mock_marker);
    executor->add_option("--executor.mock_marker_bonus", state.executor.mock_marker_bonus);

    auto* diagnose = app.add_option_group("diagnose", "Diagnosis thresholds ([diagnose])");
    diagnose->add_option("--diagnose.coupling_alpha", state.coupling_alpha);
    diagnose->add_option("--diagnose.headroom_threshold", state.headroom_threshold);

    auto* prose = app.add_option_group("prose", "Evolutionary optimizer ([prose])");
    prose->add_option("--prose.population_size", state.prose.population_size);
    prose->add_option("--prose.elite_count", state.prose.elite_count);
    prose->add_option("--prose.min_generations", state.prose.min_generations);
    prose->add_option("--prose.stagnation_limit", state.prose.stagnation_limit);
    prose->add_option("--prose.seed_count", state.prose.seed_count);
    prose->add_option("--prose.seed_keep", state.prose.seed_keep);
    prose->add_option("--prose.budget_cap", state.prose.budget_cap);
    prose->add_option("--prose.operator_floor", state.prose.operator_floor);
    prose->add_option("--prose.blend_rate", state.prose.blend_rate);
}

// Single-agent scorer used by headroom and optimize.
PromptScorer single_agent_scorer(Executor& executor, const std::string& rubric,
                                 CostCounters* cost = nullptr) {
    const std::string effective = rubric.empty()
                                      ? "Rate how well the answer addresses the question on a "
                                        "0-100 scale. Reply with a line `SCORE: <number>`."
                                      : rubric;
    return [&executor, effective, cost](const std::string& prompt, const Question& q) {
        const auto transcript = executor.run_single(prompt, q);
        const auto judged = executor.judge_score(transcript, effective);
        if (cost != nullptr) cost->calls += 2;
        return judged.value;
    };
}

int cmd_synth(CliState& state, const SyntheticSpec& spec_in) {
    SyntheticSpec spec = spec_in;
    spec.seed = state.global.seed;
    const auto synth = synth_tensor(spec);
    const fs::path dir = state.out("synth_out");
    fs::create_directories(dir);
    write_tensor_jsonl(dir / "scores.jsonl", synth.tensor);
    const json manifest{{"ka", spec.ka},
                        {"kb", spec.kb},
                        {"n", spec.n},
                        {"question_sd", spec.question_sd},
                        {"a_sd", spec.a_sd},
                        {"b_sd", spec.b_sd},
                        {"interaction_sd", spec.interaction_sd},
                        {"noise_sd", spec.noise_sd},
                        {"base", spec.base},
                        {"seed", spec.seed},
                        {"created_at", now_iso8601()}};
    write_text(dir / "synth_manifest.json", manifest.dump(2) + "\n");
    if (state.global.json_output) {
        std::cout << manifest.dump() << "\n";
    } else {
        std::cout << "wrote " << spec.ka << "x" << spec.kb << "x" << spec.n << " tensor to "
                  << (dir / "scores.jsonl").string() << "\n";
    }
    return 0;
}

int cmd_grid(CliState& state, const std::string& prompts_a_file,
             const std::string& prompts_b_file, const std::string& questions_file, bool resume) {
    auto executor = make_executor(state.executor);
    GridOptions options;
    options.seed = state.global.seed;
    options.resume = resume;
    options.rubric = state.rubric();
    const auto result =
        run_grid(read_prompt_list(prompts_a_file), read_prompt_list(prompts_b_file),
                 read_questions(questions_file), *executor, state.out("grid_out"), options);
    if (state.global.json_output) {
        std::cout << result.manifest.to_json().dump() << "\n";
    } else {
        std::cout << "grid complete: " << result.manifest.cells_done << " cells, "
                  << result.manifest.cost.calls << " calls\n";
        std::cout << render_anova_table(decompose(result.tensor), executor->config().model_id,
                                        "-");
    }
    return 0;
}

int cmd_anova(CliState& state, const std::string& tensor_file, const std::string& dims_arg,
              const std::string& model_label, const std::string& task_label) {
    const auto tensor = load_tensor_arg(tensor_file, dims_arg);
    const auto table = decompose(tensor);
    if (state.global.json_output) {
        std::cout << to_json(table).dump() << "\n";
    } else {
        std::cout << render_anova_table(table, model_label, task_label);
        const auto note = ms_per_df_note(table);
        std::cout << "mean squares per df: AxB " << note.ms_axb << ", A " << note.ms_a << ", B "
                  << note.ms_b << "\n";
    }
    return 0;
}

int cmd_landscape(CliState& state, const std::string& tensor_file, const std::string& dims_arg) {
    const auto tensor = load_tensor_arg(tensor_file, dims_arg);
    const auto stats = analyze_landscape(cell_means(tensor));
    if (state.global.json_output) {
        std::cout << to_json(stats).dump() << "\n";
    } else {
        std::cout << render_landscape(stats);
    }
    return 0;
}

int cmd_simulate_budget(CliState& state, const std::string& tensor_file,
                        const std::string& dims_arg, std::vector<int> budgets, int trials) {
    const auto tensor = load_tensor_arg(tensor_file, dims_arg);
    if (budgets.empty()) {
        const int max_budget = int(tensor.ka() * tensor.kb() * tensor.n());
        for (int b = 2; b < max_budget; b *= 2) budgets.push_back(b);
        budgets.push_back(max_budget);
    }
    const auto curve = budget_simulation(tensor, budgets, trials, state.global.seed);
    if (state.global.json_output) {
        std::cout << to_json(curve).dump() << "\n";
    } else {
        std::cout << render_budget_curve(curve);
    }
    return 0;
}

int cmd_headroom(CliState& state, const std::string& baseline_file,
                 const std::string& candidates_file, const std::string& questions_file,
                 int candidate_count) {
    auto executor = make_executor(state.executor);
    const auto baseline = read_single_prompt(baseline_file);
    const auto questions = read_questions(questions_file);

    std::vector<std::string> candidates;
    if (!candidates_file.empty()) {
        candidates = read_prompt_list(candidates_file);
    } else {
        auto transformer = state.make_transformer(*executor);
        candidates =
            generate_candidates(baseline, *transformer, candidate_count, state.global.seed);
    }

    CostCounters cost;
    const auto scorer = single_agent_scorer(*executor, state.rubric(), &cost);
    const auto report =
        headroom_test(baseline, candidates, questions, scorer, state.headroom_threshold);

    if (!state.global.out_dir.empty()) {
        fs::create_directories(state.global.out_dir);
        write_text(fs::path(state.global.out_dir) / "headroom.json",
                   report.to_json().dump(2) + "\n");
    }
    if (state.global.json_output) {
        std::cout << report.to_json().dump() << "\n";
    } else {
        for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
        std::cout << to_string(report.decision) << ": best gain " << report.best_gain
                  << " pts over zero-shot " << report.zero_shot_score << " (threshold "
                  << report.threshold << ", " << report.n_questions << " questions, " << cost.calls
                  << " calls)\n";
        std::cout << "decisions are model-specific; re-run after model updates\n";
    }
    return 0;
}

int cmd_optimize(CliState& state, const std::string& baseline_file,
                 const std::string& task_desc_file, const std::string& train_file,
                 const std::string& holdout_file, int budget) {
    auto executor = make_executor(state.executor);
    auto transformer = state.make_transformer(*executor);
    const auto baseline = read_single_prompt(baseline_file);
    const std::string task_description =
        task_desc_file.empty() ? baseline : read_file(task_desc_file);
    const auto train = read_questions(train_file);

    const auto scorer = single_agent_scorer(*executor, state.rubric());
    PromptEvaluator evaluator = [&](const std::string& prompt) {
        std::vector<double> scores;
        scores.reserve(train.size());
        for (const auto& q : train) scores.push_back(scorer(prompt, q));
        return scores;
    };

    EvolutionConfig config = state.prose;
    config.seed = state.global.seed;
    config.budget_cap = budget;

    std::optional<PromptEvaluator> holdout_eval;
    std::vector<Question> holdout;
    if (!holdout_file.empty()) {
        holdout = read_questions(holdout_file);
        holdout_eval = [&](const std::string& prompt) {
            std::vector<double> scores;
            for (const auto& q : holdout) scores.push_back(scorer(prompt, q));
            return scores;
        };
    }

    const auto result = evolve(baseline, task_description, evaluator, *transformer, config,
                               holdout_eval ? &*holdout_eval : nullptr);

    const fs::path dir = state.out("optimize_out");
    fs::create_directories(dir);
    write_text(dir / "best_prompt.txt", result.best_prompt.flatten() + "\n");
    json best{{"role", result.best_prompt.role},
              {"task", result.best_prompt.task},
              {"constraints", result.best_prompt.constraints},
              {"examples", result.best_prompt.examples},
              {"format", result.best_prompt.format},
              {"fitness", result.best_breakdown.fitness},
              {"train_score", result.best_train_score},
              {"evaluations_used", result.evaluations_used},
              {"budget_exhausted", result.budget_exhausted}};
    if (result.holdout_score) best["holdout_score"] = *result.holdout_score;
    write_text(dir / "best_prompt.json", best.dump(2) + "\n");
    {
        std::ofstream history(dir / "history.jsonl");
        for (const auto& record : result.history) history << record.to_json().dump() << "\n";
    }

    if (state.global.json_output) {
        std::cout << best.dump() << "\n";
    } else {
        std::cout << "best prompt (fitness " << result.best_breakdown.fitness << ", train score "
                  << result.best_train_score;
        if (result.holdout_score) std::cout << ", holdout " << *result.holdout_score;
        std::cout << ", " << result.evaluations_used << " evaluations"
                  << (result.budget_exhausted ? ", budget exhausted" : "") << "):\n"
                  << result.best_prompt.flatten() << "\n";
    }
    return 0;
}

int cmd_diagnose(CliState& state, const std::string& prompts_a_file,
                 const std::string& prompts_b_file, const std::string& questions_file,
                 const std::string& holdout_file, int candidate_count) {
    auto executor = make_executor(state.executor);
    auto transformer = state.make_transformer(*executor);

    DiagnoseInputs inputs;
    inputs.prompts_a = read_prompt_list(prompts_a_file);
    inputs.prompts_b = read_prompt_list(prompts_b_file);
    inputs.grid_questions = read_questions(questions_file);
    if (!holdout_file.empty()) inputs.holdout_questions = read_questions(holdout_file);
    inputs.candidate_count = candidate_count;
    inputs.headroom_threshold = state.headroom_threshold;
    inputs.coupling_alpha = state.coupling_alpha;
    inputs.seed = state.global.seed;
    inputs.out_dir = state.out("diagnose_out");
    inputs.rubric = state.rubric();

    const auto report = diagnose(inputs, *executor, *transformer);
    fs::create_directories(inputs.out_dir);
    write_text(inputs.out_dir / "diagnosis.json", report.to_json().dump(2) + "\n");
    write_text(inputs.out_dir / "diagnosis.txt", render_diagnosis(report));
    if (state.global.json_output) {
        std::cout << report.to_json().dump() << "\n";
    } else {
        std::cout << render_diagnosis(report);
        std::cout << "\n"
                  << render_cost_table(
                         Dims{int(inputs.prompts_a.size()), int(inputs.prompts_b.size()),
                              int(inputs.grid_questions.size())},
                         inputs.candidate_count,
                         int((inputs.holdout_questions.empty() ? inputs.grid_questions
                                                               : inputs.holdout_questions)
                                 .size()));
    }
    return exit_code_for(report);
}

int cmd_report(CliState& state, const std::string& in_file) {
    const auto report = DiagnosisReport::from_json(json::parse(read_file(in_file)));
    if (state.global.json_output) {
        std::cout << report.to_json().dump() << "\n";
    } else {
        std::cout << render_diagnosis(report);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage coupling and headroom diagnostic for two-agent prompt pipelines"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI/TOML config with [executor], [diagnose], [prose]");

    CliState state;
    add_config_options(app, state);

    // synth
    SyntheticSpec spec;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic score tensor");
    synth->add_option("--ka", spec.ka);
    synth->add_option("--kb", spec.kb);
    synth->add_option("--n", spec.n);
    synth->add_option("--question-sd", spec.question_sd);
    synth->add_option("--a-sd", spec.a_sd);
    synth->add_option("--b-sd", spec.b_sd);
    synth->add_option("--interaction-sd", spec.interaction_sd);
    synth->add_option("--noise-sd", spec.noise_sd);
    synth->add_option("--base", spec.base);

    // grid
    std::string prompts_a_file, prompts_b_file, questions_file, holdout_file;
    bool resume = false;
    auto* grid = app.add_subcommand("grid", "Exhaustive prompt-pair grid evaluation");
    grid->add_option("--prompts-a", prompts_a_file)->required();
    grid->add_option("--prompts-b", prompts_b_file)->required();
    grid->add_option("--questions", questions_file)->required();
    grid->add_flag("--resume", resume, "Reuse completed cells in the output dir");

    // anova
    std::string tensor_file, dims_arg, model_label = "-", task_label = "-";
    auto* anova = app.add_subcommand("anova", "Variance decomposition of a score tensor");
    anova->add_option("--tensor", tensor_file)->required();
    anova->add_option("--dims", dims_arg, "ka,kb,n (default: inferred)");
    anova->add_option("--model", model_label);
    anova->add_option("--task", task_label);

    // landscape
    auto* landscape = app.add_subcommand("landscape", "Optima, gap and residual autocorrelation");
    landscape->add_option("--tensor", tensor_file)->required();
    landscape->add_option("--dims", dims_arg);

    // simulate-budget
    std::vector<int> budgets;
    int trials = 1000;
    auto* simulate =
        app.add_subcommand("simulate-budget", "Joint vs independent search at equal budgets");
    simulate->add_option("--tensor", tensor_file)->required();
    simulate->add_option("--dims", dims_arg);
    simulate->add_option("--budgets", budgets, "Evaluation budgets (default: powers of two)")
        ->delimiter(',');
    simulate->add_option("--trials", trials);

    // headroom
    std::string baseline_file, candidates_file;
    int candidate_count = 15;
    auto* headroom = app.add_subcommand("headroom", "Generate-and-compare headroom test");
    headroom->add_option("--baseline", baseline_file)->required();
    headroom->add_option("--candidates", candidates_file,
                         "Candidate prompts file (default: generate)");
    headroom->add_option("--questions", questions_file)->required();
    headroom->add_option("--m", candidate_count, "How many candidates to generate");
    headroom->add_option("--threshold", state.headroom_threshold);

    // optimize
    std::string task_desc_file, train_file;
    int budget = 100;
    auto* optimize = app.add_subcommand("optimize", "Structured evolutionary prompt search");
    optimize->add_option("--baseline", baseline_file)->required();
    optimize->add_option("--task-desc", task_desc_file);
    optimize->add_option("--train-questions", train_file)->required();
    optimize->add_option("--holdout", holdout_file);
    optimize->add_option("--budget", budget, "Evaluation budget");

    // diagnose
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Full two-stage diagnosis");
    diagnose_cmd->add_option("--prompts-a", prompts_a_file)->required();
    diagnose_cmd->add_option("--prompts-b", prompts_b_file)->required();
    diagnose_cmd->add_option("--questions", questions_file)->required();
    diagnose_cmd->add_option("--holdout", holdout_file);
    diagnose_cmd->add_option("--candidates", candidate_count, "Stage-2 candidate count");
    diagnose_cmd->add_option("--threshold", state.headroom_threshold);

    // report
    std::string in_file;
    auto* report = app.add_subcommand("report", "Re-render a stored diagnosis JSON");
    report->add_option("--in", in_file)->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        state.executor.validate();
        if (synth->parsed()) return cmd_synth(state, spec);
        if (grid->parsed()) {
            return cmd_grid(state, prompts_a_file, prompts_b_file, questions_file, resume);
        }
        if (anova->parsed()) {
            return cmd_anova(state, tensor_file, dims_arg, model_label, task_label);
        }
        if (landscape->parsed()) return cmd_landscape(state, tensor_file, dims_arg);
        if (simulate->parsed()) {
            return cmd_simulate_budget(state, tensor_file, dims_arg, budgets, trials);
        }
        if (headroom->parsed()) {
            return cmd_headroom(state, baseline_file, candidates_file, questions_file,
                                candidate_count);
        }
        if (optimize->parsed()) {
            return cmd_optimize(state, baseline_file, task_desc_file, train_file, holdout_file,
                                budget);
        }
        if (diagnose_cmd->parsed()) {
            return cmd_diagnose(state, prompts_a_file, prompts_b_file, questions_file,
                                holdout_file, candidate_count);
        }
        if (report->parsed()) return cmd_report(state, in_file);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
