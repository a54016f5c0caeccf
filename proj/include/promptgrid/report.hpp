#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "promptgrid/anova.hpp"
#include "promptgrid/grid.hpp"
#include "promptgrid/headroom.hpp"
#include "promptgrid/landscape.hpp"

namespace promptgrid {

enum class CouplingVerdict { COUPLED, DECOUPLED };
enum class BottleneckAgent { A, B, Neither };

std::string to_string(CouplingVerdict verdict);
std::string to_string(BottleneckAgent agent);

struct Stage1Result {
    AnovaTable anova;
    LandscapeStats landscape;
    CouplingVerdict verdict = CouplingVerdict::DECOUPLED;
    BottleneckAgent bottleneck = BottleneckAgent::Neither;
};

/// Two-stage diagnosis: coupling first, then headroom on the bottleneck
/// agent when the agents turn out independent.
struct DiagnosisReport {
    Stage1Result stage1;
    std::optional<HeadroomReport> stage2;
    BottleneckAgent stage2_agent = BottleneckAgent::Neither;
    std::string recommendation;
    CostCounters cost_actual;
    double cost_estimate = 0.0;
    std::string model_id;
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const;
    static DiagnosisReport from_json(const nlohmann::json& j);
};

/// Derives the verdict (COUPLED iff interaction p < 0.05) and the bottleneck
/// (the agent with the smaller significant main-effect p, else Neither).
Stage1Result stage1_from_anova(const AnovaTable& table, const CellMeanMatrix& means,
                               double alpha = 0.05);

struct DiagnoseInputs {
    std::vector<std::string> prompts_a;
    std::vector<std::string> prompts_b;
    std::vector<Question> grid_questions;
    std::vector<Question> holdout_questions;  // stage 2; falls back to grid questions
    int candidate_count = 15;
    double headroom_threshold = 2.0;
    double coupling_alpha = 0.05;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::string rubric;
};

/// Full two-stage run. Stage 1 always executes; stage 2 runs only on a
/// DECOUPLED verdict, against the bottleneck agent (Agent B when neither main
/// effect is significant), scoring candidates through the pipeline with the
/// other agent pinned to its first (zero-shot) prompt.
DiagnosisReport diagnose(const DiagnoseInputs& inputs, Executor& executor,
                         PromptTransformer& transformer);

/// Scriptable exit semantics: 0 completed DECOUPLED, 2 completed COUPLED.
int exit_code_for(const DiagnosisReport& report);

/// Fixed-width variance-shares table (percent, two decimals, significance
/// stars on A, B and AxB).
std::string render_anova_table(const AnovaTable& table, const std::string& model_label = "-",
                               const std::string& task_label = "-");

/// Cost overview for the two diagnostic stages and the optional
/// generate-and-rank follow-up.
std::string render_cost_table(Dims grid_dims, int headroom_candidates, int headroom_questions,
                              double per_call_price = kDefaultPerCallPrice);

std::string render_budget_curve(const BudgetCurve& curve);
std::string render_landscape(const LandscapeStats& stats);
std::string render_diagnosis(const DiagnosisReport& report);

nlohmann::json to_json(const LandscapeStats& stats);
LandscapeStats landscape_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BudgetCurve& curve);
BudgetCurve budget_curve_from_json(const nlohmann::json& j);

}  // namespace promptgrid
