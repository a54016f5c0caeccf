#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "promptgrid/prompt.hpp"
#include "promptgrid/transformer.hpp"

namespace promptgrid {

/// Structured evolutionary prompt search: a population of five-component
/// prompts evolved by six operators whose selection weights adapt to the
/// fitness of the offspring they produce, under a risk-adjusted fitness that
/// rewards high mean score, score consistency, and a strong worst-question
/// tail.

enum class EvolutionOperator {
    TargetedMutation,
    LlmCrossover,
    RandomMutation,
    Exploration,
    Simplification,
    RandomGeneration,
};
inline constexpr std::array<EvolutionOperator, 6> kAllOperators{
    EvolutionOperator::TargetedMutation, EvolutionOperator::LlmCrossover,
    EvolutionOperator::RandomMutation,   EvolutionOperator::Exploration,
    EvolutionOperator::Simplification,   EvolutionOperator::RandomGeneration,
};
std::string to_string(EvolutionOperator op);

/// Risk-adjusted fitness pieces, all in [0, 1]:
/// fitness = 0.70 * mean_score + 0.15 * sharpe_norm + 0.15 * dro_norm.
struct FitnessBreakdown {
    double mean_score = 0.0;   // mean per-question score / 100
    double sharpe_norm = 0.0;  // mean/(sd + 1e-6), min-max scaled over the population
    double dro_norm = 0.0;     // mean of the worst ceil(20%) question scores / 100
    double fitness = 0.0;
    std::vector<double> per_question_scores;  // raw points

    nlohmann::json to_json() const;
};

inline constexpr double kFitnessMeanWeight = 0.70;
inline constexpr double kFitnessSharpeWeight = 0.15;
inline constexpr double kFitnessDroWeight = 0.15;

/// mean/(population-sd + 1e-6) before normalization; sd over questions.
double sharpe_raw(const std::vector<double>& per_question_scores);

/// Min-max bounds of the raw Sharpe values across the current population.
struct PopulationStats {
    double sharpe_min = 0.0;
    double sharpe_max = 0.0;
};
PopulationStats population_stats(const std::vector<double>& raw_sharpes);

/// Assembles the breakdown for one candidate given the population context.
/// A degenerate population (single member, or all Sharpe values equal) pins
/// sharpe_norm at 0.5.
FitnessBreakdown fitness(const std::vector<double>& per_question_scores,
                         const PopulationStats& stats);

/// Adaptive operator-selection weights. Always a valid distribution with
/// every entry at or above the floor.
struct OperatorWeights {
    std::array<double, 6> weights{0.25, 0.20, 0.20, 0.15, 0.15, 0.05};
    double blend_rate = 0.3;
    double floor = 0.02;

    double operator[](EvolutionOperator op) const { return weights[std::size_t(op)]; }
    nlohmann::json to_json() const;
};

/// Blends the current weights toward targets proportional to each operator's
/// mean offspring fitness this generation (operators without offspring keep
/// their current weight as the target), then floors and renormalizes.
OperatorWeights update_weights(const OperatorWeights& w,
                               const std::array<std::vector<double>, 6>& offspring_fitness);

/// Applies one operator. targeted_mutation rewrites exactly one seeded-random
/// component and leaves the rest byte-identical; llm_crossover takes each
/// component from a seeded-random parent (requires 2 parents);
/// random_generation needs none and builds from the task description.
StructuredPrompt apply_operator(EvolutionOperator op, const std::vector<StructuredPrompt>& parents,
                                const std::string& task_description, PromptTransformer& transformer,
                                std::uint64_t seed);

/// Rule-backed mode splits on labeled headers; LLM-backed mode asks the
/// transformer to emit the five labeled sections and parses its reply.
StructuredPrompt decompose_prompt(const std::string& text, PromptTransformer* llm = nullptr);

struct EvolutionConfig {
    int population_size = 20;
    int elite_count = 5;
    int min_generations = 5;
    int stagnation_limit = 4;
    int seed_count = 20;
    int seed_keep = 10;
    std::uint64_t seed = 0;
    int budget_cap = 100;  // total candidate evaluations
    double operator_floor = 0.02;
    double blend_rate = 0.3;

    void validate() const;
};

/// Scores a flattened prompt on the training questions.
using PromptEvaluator = std::function<std::vector<double>(const std::string& prompt)>;

struct EvaluatedCandidate {
    StructuredPrompt prompt;
    FitnessBreakdown breakdown;
    std::optional<EvolutionOperator> produced_by;  // empty for seeds
    int born_generation = 0;
};

struct GenerationRecord {
    int generation = 0;  // 0 = seeding
    double best_fitness = 0.0;
    double best_ever_fitness = 0.0;
    bool improved = false;
    int stagnation = 0;
    OperatorWeights weights;                    // after this generation's update
    std::array<int, 6> operator_usage{};        // offspring per operator
    std::vector<FitnessBreakdown> population;   // breakdowns in population order

    nlohmann::json to_json() const;
};

struct EvolutionResult {
    StructuredPrompt best_prompt;
    FitnessBreakdown best_breakdown;
    double best_train_score = 0.0;              // mean points on the train set
    std::optional<double> holdout_score;        // mean points, when a holdout evaluator is given
    std::vector<GenerationRecord> history;
    int evaluations_used = 0;
    bool budget_exhausted = false;              // stopped by the cap, not the stagnation rule
};

/// Runs the full search: seed `seed_count` candidates (baseline first, then
/// transformer variations), keep the best `seed_keep` by training score, pad
/// the population back up with random generation, then iterate generations of
/// elite carry-over plus weight-sampled operators over fitness-proportional
/// parents. Stops once generations >= min_generations and the best-ever
/// fitness has not improved for stagnation_limit generations, or when the
/// evaluation budget runs out (flagged in the result, best-so-far returned).
EvolutionResult evolve(const std::string& baseline_prompt, const std::string& task_description,
                       const PromptEvaluator& evaluator, PromptTransformer& transformer,
                       const EvolutionConfig& config,
                       const PromptEvaluator* holdout_evaluator = nullptr);

}  // namespace promptgrid
