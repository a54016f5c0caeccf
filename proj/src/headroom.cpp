#include "promptgrid/headroom.hpp"

#include <algorithm>
#include <limits>

#include "promptgrid/stats.hpp"

namespace promptgrid {

using nlohmann::json;

std::string to_string(HeadroomDecision decision) {
    return decision == HeadroomDecision::OPTIMIZE ? "OPTIMIZE" : "FLAT";
}

json HeadroomReport::to_json() const {
    json cand = json::array();
    for (const auto& c : candidates) {
        cand.push_back(json{{"digest", c.digest},
                            {"text", c.text},
                            {"mean_score", c.mean_score},
                            {"per_question", c.per_question}});
    }
    return json{{"zero_shot_score", zero_shot_score},
                {"candidates", cand},
                {"best_gain", best_gain},
                {"threshold", threshold},
                {"decision", to_string(decision)},
                {"n_questions", n_questions},
                {"question_set_digest", question_set_digest},
                {"warnings", warnings}};
}

HeadroomReport HeadroomReport::from_json(const json& j) {
    HeadroomReport report;
    report.zero_shot_score = j.at("zero_shot_score").get<double>();
    for (const auto& c : j.at("candidates")) {
        CandidateResult candidate;
        candidate.digest = c.at("digest").get<std::string>();
        candidate.text = c.value("text", "");
        candidate.mean_score = c.at("mean_score").get<double>();
        candidate.per_question = c.value("per_question", std::vector<double>{});
        report.candidates.push_back(std::move(candidate));
    }
    report.best_gain = j.at("best_gain").get<double>();
    report.threshold = j.at("threshold").get<double>();
    report.decision = j.at("decision").get<std::string>() == "OPTIMIZE"
                          ? HeadroomDecision::OPTIMIZE
                          : HeadroomDecision::FLAT;
    report.n_questions = j.at("n_questions").get<int>();
    report.question_set_digest = j.value("question_set_digest", "");
    report.warnings = j.value("warnings", std::vector<std::string>{});
    return report;
}

namespace {

CandidateResult score_prompt(const std::string& prompt, const std::vector<Question>& questions,
                             const PromptScorer& scorer) {
    CandidateResult result;
    result.digest = sha256_hex(prompt);
    result.text = prompt;
    double total = 0.0;
    for (const auto& q : questions) {
        const double s = scorer(prompt, q);
        result.per_question.push_back(s);
        total += s;
    }
    result.mean_score = total / double(questions.size());
    return result;
}

std::string questions_digest(const std::vector<Question>& questions) {
    std::string joined;
    for (const auto& q : questions) joined += q.id + "\n";
    return sha256_hex(joined);
}

}  // namespace

HeadroomReport headroom_test(const std::string& baseline_prompt,
                             const std::vector<std::string>& candidates,
                             const std::vector<Question>& questions, const PromptScorer& scorer,
                             double threshold) {
    if (baseline_prompt.empty()) throw EmptyPromptError("headroom_test requires a baseline prompt");
    if (candidates.empty()) throw Error("headroom_test requires at least one candidate");
    if (questions.empty()) throw Error("headroom_test requires at least one question");

    HeadroomReport report;
    report.threshold = threshold;
    report.n_questions = int(questions.size());
    report.question_set_digest = questions_digest(questions);
    if (candidates.size() < 10 || candidates.size() > 20) {
        report.warnings.push_back("candidate count " + std::to_string(candidates.size()) +
                                  " is outside the recommended 10-20 band");
    }

    report.zero_shot_score = score_prompt(baseline_prompt, questions, scorer).mean_score;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& candidate : candidates) {
        if (candidate.empty()) throw EmptyPromptError("empty candidate prompt");
        report.candidates.push_back(score_prompt(candidate, questions, scorer));
        best = std::max(best, report.candidates.back().mean_score);
    }
    report.best_gain = best - report.zero_shot_score;
    report.decision =
        report.best_gain > threshold ? HeadroomDecision::OPTIMIZE : HeadroomDecision::FLAT;
    return report;
}

std::vector<std::string> generate_candidates(const std::string& baseline_prompt,
                                             PromptTransformer& transformer, int m,
                                             std::uint64_t seed) {
    if (m < 1) throw Error("candidate count must be >= 1");
    std::vector<std::string> candidates;
    candidates.reserve(std::size_t(m));
    for (int i = 0; i < m; ++i) {
        TransformRequest req;
        // Mostly conservative paraphrases with an exploratory tail.
        req.kind = (i % 4 == 3) ? TransformRequest::Kind::Explore
                                : TransformRequest::Kind::Paraphrase;
        req.text = baseline_prompt;
        req.variation = 0.3 + 0.7 * double(i) / std::max(1, m - 1);
        req.seed = seed * 1000003ull + std::uint64_t(i);
        candidates.push_back(transformer.transform(req));
    }
    return candidates;
}

std::string generate_and_rank(const std::string& baseline_prompt, PromptTransformer& transformer,
                              int m, const std::vector<Question>& questions,
                              const PromptScorer& scorer, std::uint64_t seed) {
    const auto candidates = generate_candidates(baseline_prompt, transformer, m, seed);
    const double baseline_score = score_prompt(baseline_prompt, questions, scorer).mean_score;
    double best_score = baseline_score;
    std::string best = baseline_prompt;
    for (const auto& candidate : candidates) {
        const double score = score_prompt(candidate, questions, scorer).mean_score;
        // Strictly-better-than rule with a 1e-9 band: exact ties keep the
        // baseline (or the earlier candidate).
        if (score > best_score + 1e-9) {
            best_score = score;
            best = candidate;
        }
    }
    return best;
}

double coin_flip_test(long long below_count, long long total_runs) {
    return binomial_two_sided_p(below_count, total_runs);
}

}  // namespace promptgrid
