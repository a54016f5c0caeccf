#include "promptgrid/report.hpp"

#include <iomanip>
#include <sstream>

#include "promptgrid/stats.hpp"

namespace promptgrid {

using nlohmann::json;

std::string to_string(CouplingVerdict verdict) {
    return verdict == CouplingVerdict::COUPLED ? "COUPLED" : "DECOUPLED";
}

std::string to_string(BottleneckAgent agent) {
    switch (agent) {
        case BottleneckAgent::A: return "A";
        case BottleneckAgent::B: return "B";
        case BottleneckAgent::Neither: return "neither";
    }
    return "neither";
}

Stage1Result stage1_from_anova(const AnovaTable& table, const CellMeanMatrix& means, double alpha) {
    Stage1Result stage1;
    stage1.anova = table;
    stage1.landscape = analyze_landscape(means);
    const double interaction_p = table.axb.p.value_or(1.0);
    stage1.verdict =
        interaction_p < alpha ? CouplingVerdict::COUPLED : CouplingVerdict::DECOUPLED;

    const double p_a = table.a.p.value_or(1.0);
    const double p_b = table.b.p.value_or(1.0);
    if (p_a < alpha || p_b < alpha) {
        stage1.bottleneck = p_a <= p_b ? BottleneckAgent::A : BottleneckAgent::B;
    } else {
        stage1.bottleneck = BottleneckAgent::Neither;
    }
    return stage1;
}

int exit_code_for(const DiagnosisReport& report) {
    return report.stage1.verdict == CouplingVerdict::COUPLED ? 2 : 0;
}

namespace {

std::string fixed(double value, int decimals) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(decimals) << value;
    return out.str();
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string share_cell(const AnovaRow& row) {
    std::string cell = fixed(row.share * 100.0, 2);
    if (row.p) cell += significance_stars(*row.p);
    return cell;
}

std::string dollars(double value) {
    std::ostringstream out;
    out << "$" << std::fixed << std::setprecision(2) << value;
    return out.str();
}

std::string recommendation_text(const Stage1Result& stage1,
                                const std::optional<HeadroomReport>& stage2,
                                BottleneckAgent stage2_agent) {
    std::ostringstream out;
    if (stage1.verdict == CouplingVerdict::COUPLED) {
        out << "The interaction term is significant (p = "
            << fixed(stage1.anova.axb.p.value_or(1.0), 4)
            << "): the agents' prompts are coupled, so optimize the prompt pair jointly; "
               "per-agent search would miss the cross terms.";
    } else {
        out << "No significant interaction (p = " << fixed(stage1.anova.axb.p.value_or(1.0), 4)
            << "): the agents can be tuned independently. ";
        out << "Bottleneck agent: " << to_string(stage1.bottleneck);
        if (stage1.bottleneck == BottleneckAgent::Neither) {
            out << " (no significant main effect; stage 2 defaulted to Agent "
                << to_string(stage2_agent) << ", which produces the final output)";
        }
        out << ". ";
        if (stage2) {
            if (stage2->decision == HeadroomDecision::OPTIMIZE) {
                out << "Headroom test: best candidate gains " << fixed(stage2->best_gain, 2)
                    << " pts over zero-shot (threshold " << fixed(stage2->threshold, 1)
                    << "), so optimization is worth running. Use generate-and-rank on agent "
                    << to_string(stage2_agent)
                    << ", and inspect the winning candidate for explicit output-structure "
                       "instructions (schemas, templates, formatting rules): gains of this size "
                       "usually come from requesting a format the model supports but does not "
                       "emit unprompted.";
            } else {
                out << "Headroom test: best candidate gains only " << fixed(stage2->best_gain, 2)
                    << " pts over zero-shot (threshold " << fixed(stage2->threshold, 1)
                    << "), so the landscape is flat. Keep the zero-shot prompt and spend the "
                       "effort elsewhere.";
            }
        }
    }
    out << " Re-run this diagnostic after every model update: which agents matter and whether "
           "optimization pays are properties of the model, not the pipeline.";
    return out.str();
}

}  // namespace

DiagnosisReport diagnose(const DiagnoseInputs& inputs, Executor& executor,
                         PromptTransformer& transformer) {
    DiagnosisReport report;
    report.started_at = now_iso8601();
    report.model_id = executor.config().model_id;

    GridOptions grid_options;
    grid_options.seed = inputs.seed;
    grid_options.rubric = inputs.rubric;
    const auto grid = run_grid(inputs.prompts_a, inputs.prompts_b, inputs.grid_questions, executor,
                               inputs.out_dir / "grid", grid_options);

    const auto table = decompose(grid.tensor);
    report.stage1 = stage1_from_anova(table, cell_means(grid.tensor), inputs.coupling_alpha);
    report.cost_actual = grid.manifest.cost;
    report.cost_estimate = estimate_cost(Dims{int(inputs.prompts_a.size()),
                                              int(inputs.prompts_b.size()),
                                              int(inputs.grid_questions.size())},
                                         kDefaultPerCallPrice);

    if (report.stage1.verdict == CouplingVerdict::DECOUPLED) {
        // Stage 2 targets the bottleneck agent; Agent B (the one producing the
        // final output) when neither main effect is significant.
        report.stage2_agent = report.stage1.bottleneck == BottleneckAgent::A ? BottleneckAgent::A
                                                                             : BottleneckAgent::B;
        const bool tuning_a = report.stage2_agent == BottleneckAgent::A;
        const std::string baseline =
            tuning_a ? inputs.prompts_a.front() : inputs.prompts_b.front();
        const std::string fixed_other =
            tuning_a ? inputs.prompts_b.front() : inputs.prompts_a.front();

        const std::string rubric = inputs.rubric;
        PromptScorer scorer = [&](const std::string& prompt, const Question& q) {
            const auto transcript = tuning_a ? executor.run_pipeline(prompt, fixed_other, q)
                                             : executor.run_pipeline(fixed_other, prompt, q);
            const auto judged = executor.judge_score(
                transcript, rubric.empty() ? "Score the answer 0-100. Reply `SCORE: <number>`."
                                           : rubric);
            report.cost_actual.calls += 3;
            return judged.value;
        };

        const auto candidates =
            generate_candidates(baseline, transformer, inputs.candidate_count, inputs.seed);
        const auto& questions = inputs.holdout_questions.empty() ? inputs.grid_questions
                                                                 : inputs.holdout_questions;
        report.stage2 =
            headroom_test(baseline, candidates, questions, scorer, inputs.headroom_threshold);
    }

    report.recommendation =
        recommendation_text(report.stage1, report.stage2, report.stage2_agent);
    report.finished_at = now_iso8601();
    return report;
}

std::string render_anova_table(const AnovaTable& table, const std::string& model_label,
                               const std::string& task_label) {
    const std::size_t model_width = std::max<std::size_t>(10, model_label.size() + 2);
    const std::size_t task_width = std::max<std::size_t>(10, task_label.size() + 2);
    std::ostringstream out;
    out << pad("Model", model_width) << pad("Task", task_width) << pad("Q", 9) << pad("A", 10)
        << pad("B", 10) << pad("AxB", 9) << pad("Err", 8) << "\n";
    out << pad(model_label, model_width) << pad(task_label, task_width)
        << pad(share_cell(table.question), 9) << pad(share_cell(table.a), 10)
        << pad(share_cell(table.b), 10) << pad(share_cell(table.axb), 9)
        << pad(share_cell(table.error), 8) << "\n";
    out << "shares in % of total SS; *p<0.05 **p<0.01 ***p<0.001; interaction F = "
        << (table.axb.f ? fixed(*table.axb.f, 3) : std::string("n/a")) << ", p = "
        << (table.axb.p ? fixed(*table.axb.p, 4) : std::string("n/a")) << ", df = ("
        << table.axb.df << ", " << table.error.df << ")\n";
    return out.str();
}

std::string render_cost_table(Dims grid_dims, int headroom_candidates, int headroom_questions,
                              double per_call_price) {
    const double stage1 = estimate_cost(grid_dims, per_call_price);
    // Headroom: baseline + candidates, one agent call and one judge call per
    // (prompt, question).
    const double stage2_calls = 2.0 * (headroom_candidates + 1) * headroom_questions;
    const double stage2 = stage2_calls * per_call_price;
    // Generate-and-rank doubles the candidate batch and adds generation calls.
    const double gr_calls = 2.0 * 20 * headroom_questions + 20;
    const double gr = gr_calls * per_call_price;

    std::ostringstream out;
    out << pad("Approach", 34) << pad("Est. cost", 12) << "What it answers\n";
    out << pad("Stage 1: coupling grid", 34) << pad(dollars(stage1), 12)
        << "Do the agents' prompts interact?\n";
    out << pad("Stage 2: headroom test", 34) << pad(dollars(stage2), 12)
        << "Is prompt optimization worth it?\n";
    out << pad("  + generate-and-rank (optional)", 34) << pad(dollars(gr), 12)
        << "Best single-agent prompt\n";
    return out.str();
}

std::string render_budget_curve(const BudgetCurve& curve) {
    std::ostringstream out;
    out << pad("budget", 10) << pad("joint", 12) << pad("independent", 12) << "\n";
    for (std::size_t i = 0; i < curve.budgets.size(); ++i) {
        out << pad(std::to_string(curve.budgets[i]), 10) << pad(fixed(curve.joint_mean[i], 3), 12)
            << pad(fixed(curve.indep_mean[i], 3), 12) << "\n";
    }
    out << "means of best true cell score over " << curve.trials << " trials\n";
    return out.str();
}

std::string render_landscape(const LandscapeStats& stats) {
    std::ostringstream out;
    out << "joint optimum:       (" << stats.joint_opt.first << ", " << stats.joint_opt.second
        << ")\n";
    out << "independent optimum: (" << stats.indep_opt.first << ", " << stats.indep_opt.second
        << ")\n";
    out << "optimum gap:         " << fixed(stats.gap, 3) << " pts\n";
    out << "neighbor autocorrelation rho: "
        << (stats.autocorr.degenerate ? std::string("0 (degenerate surface)")
                                      : fixed(stats.autocorr.rho, 4))
        << "\n";
    return out.str();
}

std::string render_diagnosis(const DiagnosisReport& report) {
    std::ostringstream out;
    out << "== Stage 1: coupling ==\n";
    out << render_anova_table(report.stage1.anova, report.model_id, "-");
    out << render_landscape(report.stage1.landscape);
    out << "verdict: " << to_string(report.stage1.verdict)
        << " | bottleneck: " << to_string(report.stage1.bottleneck) << "\n";
    out << "\n== Stage 2: headroom ==\n";
    if (report.stage2) {
        out << "agent under test: " << to_string(report.stage2_agent) << "\n";
        out << "zero-shot: " << fixed(report.stage2->zero_shot_score, 2)
            << " | best gain: " << fixed(report.stage2->best_gain, 2)
            << " | threshold: " << fixed(report.stage2->threshold, 1)
            << " | decision: " << to_string(report.stage2->decision) << "\n";
        for (const auto& warning : report.stage2->warnings) out << "warning: " << warning << "\n";
    } else {
        out << "skipped (agents are coupled; per-agent headroom is not meaningful)\n";
    }
    out << "\n== Recommendation ==\n" << report.recommendation << "\n";
    out << "\ncalls: " << report.cost_actual.calls
        << " | grid cost estimate: " << dollars(report.cost_estimate) << " | model: "
        << report.model_id << "\n";
    return out.str();
}

json to_json(const LandscapeStats& stats) {
    json residuals = json::array();
    for (Eigen::Index i = 0; i < stats.residuals.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < stats.residuals.cols(); ++j) row.push_back(stats.residuals(i, j));
        residuals.push_back(std::move(row));
    }
    return json{{"joint_opt", {stats.joint_opt.first, stats.joint_opt.second}},
                {"indep_opt", {stats.indep_opt.first, stats.indep_opt.second}},
                {"gap", stats.gap},
                {"autocorr_rho", stats.autocorr.rho},
                {"autocorr_degenerate", stats.autocorr.degenerate},
                {"residuals", residuals}};
}

LandscapeStats landscape_from_json(const json& j) {
    LandscapeStats stats;
    stats.joint_opt = {j.at("joint_opt").at(0).get<Eigen::Index>(),
                       j.at("joint_opt").at(1).get<Eigen::Index>()};
    stats.indep_opt = {j.at("indep_opt").at(0).get<Eigen::Index>(),
                       j.at("indep_opt").at(1).get<Eigen::Index>()};
    stats.gap = j.at("gap").get<double>();
    stats.autocorr.rho = j.at("autocorr_rho").get<double>();
    stats.autocorr.degenerate = j.at("autocorr_degenerate").get<bool>();
    const auto& residuals = j.at("residuals");
    const auto rows = residuals.size();
    const auto cols = rows > 0 ? residuals.at(0).size() : 0;
    stats.residuals = Eigen::MatrixXd(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t jj = 0; jj < cols; ++jj) {
            stats.residuals(Eigen::Index(i), Eigen::Index(jj)) = residuals.at(i).at(jj).get<double>();
        }
    }
    return stats;
}

json to_json(const BudgetCurve& curve) {
    return json{{"budgets", curve.budgets},
                {"joint_mean", curve.joint_mean},
                {"indep_mean", curve.indep_mean},
                {"trials", curve.trials}};
}

BudgetCurve budget_curve_from_json(const json& j) {
    BudgetCurve curve;
    curve.budgets = j.at("budgets").get<std::vector<int>>();
    curve.joint_mean = j.at("joint_mean").get<std::vector<double>>();
    curve.indep_mean = j.at("indep_mean").get<std::vector<double>>();
    curve.trials = j.at("trials").get<int>();
    return curve;
}

json DiagnosisReport::to_json() const {
    json j{{"stage1",
            {{"anova", promptgrid::to_json(stage1.anova)},
             {"landscape", promptgrid::to_json(stage1.landscape)},
             {"verdict", to_string(stage1.verdict)},
             {"bottleneck", to_string(stage1.bottleneck)}}},
           {"stage2_agent", to_string(stage2_agent)},
           {"recommendation", recommendation},
           {"cost_actual",
            {{"calls", cost_actual.calls},
             {"input_tokens", cost_actual.input_tokens},
             {"output_tokens", cost_actual.output_tokens}}},
           {"cost_estimate", cost_estimate},
           {"model_id", model_id},
           {"started_at", started_at},
           {"finished_at", finished_at}};
    if (stage2) j["stage2"] = stage2->to_json();
    return j;
}

DiagnosisReport DiagnosisReport::from_json(const json& j) {
    DiagnosisReport report;
    const auto& s1 = j.at("stage1");
    report.stage1.anova = anova_table_from_json(s1.at("anova"));
    report.stage1.landscape = landscape_from_json(s1.at("landscape"));
    report.stage1.verdict = s1.at("verdict").get<std::string>() == "COUPLED"
                                ? CouplingVerdict::COUPLED
                                : CouplingVerdict::DECOUPLED;
    const std::string bottleneck = s1.at("bottleneck").get<std::string>();
    report.stage1.bottleneck = bottleneck == "A"   ? BottleneckAgent::A
                               : bottleneck == "B" ? BottleneckAgent::B
                                                   : BottleneckAgent::Neither;
    const std::string s2_agent = j.at("stage2_agent").get<std::string>();
    report.stage2_agent = s2_agent == "A"   ? BottleneckAgent::A
                          : s2_agent == "B" ? BottleneckAgent::B
                                            : BottleneckAgent::Neither;
    if (j.contains("stage2")) report.stage2 = HeadroomReport::from_json(j.at("stage2"));
    report.recommendation = j.at("recommendation").get<std::string>();
    report.cost_actual.calls = j.at("cost_actual").value("calls", 0LL);
    report.cost_actual.input_tokens = j.at("cost_actual").value("input_tokens", 0LL);
    report.cost_actual.output_tokens = j.at("cost_actual").value("output_tokens", 0LL);
    report.cost_estimate = j.at("cost_estimate").get<double>();
    report.model_id = j.at("model_id").get<std::string>();
    report.started_at = j.value("started_at", "");
    report.finished_at = j.value("finished_at", "");
    return report;
}

}  // namespace promptgrid
