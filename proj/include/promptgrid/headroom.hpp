#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "promptgrid/executor.hpp"
#include "promptgrid/transformer.hpp"

namespace promptgrid {

/// Scores one prompt on one question; the caller decides what "scoring"
/// means (single call + judge, pipeline with the other agent fixed, ...).
using PromptScorer = std::function<double(const std::string& prompt, const Question& q)>;

enum class HeadroomDecision { OPTIMIZE, FLAT };

struct CandidateResult {
    std::string digest;  // content digest of the prompt
    std::string text;
    double mean_score = 0.0;
    std::vector<double> per_question;
};

/// Outcome of the headroom test: does the best of a small candidate batch
/// beat the zero-shot baseline by more than the threshold?
struct HeadroomReport {
    double zero_shot_score = 0.0;
    std::vector<CandidateResult> candidates;
    double best_gain = 0.0;                 // max candidate mean - zero-shot mean
    double threshold = 2.0;                 // strict: OPTIMIZE iff best_gain > threshold
    HeadroomDecision decision = HeadroomDecision::FLAT;
    int n_questions = 0;
    std::string question_set_digest;        // all rows scored on this exact set
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    static HeadroomReport from_json(const nlohmann::json& j);
};

std::string to_string(HeadroomDecision decision);

/// Scores the baseline and every candidate on the identical question set and
/// applies the strict >threshold rule. Warns (in the report) when the
/// candidate count is outside the recommended 10-20 band.
HeadroomReport headroom_test(const std::string& baseline_prompt,
                             const std::vector<std::string>& candidates,
                             const std::vector<Question>& questions, const PromptScorer& scorer,
                             double threshold = 2.0);

/// Generate-and-rank: m transformer variations of the baseline, each scored
/// once on the question set; returns the argmax, falling back to the baseline
/// when no candidate beats it by more than 1e-9.
std::string generate_and_rank(const std::string& baseline_prompt, PromptTransformer& transformer,
                              int m, const std::vector<Question>& questions,
                              const PromptScorer& scorer, std::uint64_t seed = 0);

/// Exact two-sided binomial test against one half: did `below_count` of
/// `total_runs` landing below baseline happen by coin flip?
double coin_flip_test(long long below_count, long long total_runs);

/// Generates m candidate prompt variations (paraphrase/explore mix) from a
/// baseline. Shared by the headroom CLI and the diagnosis pipeline.
std::vector<std::string> generate_candidates(const std::string& baseline_prompt,
                                             PromptTransformer& transformer, int m,
                                             std::uint64_t seed);

}  // namespace promptgrid
