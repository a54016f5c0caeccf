#include <cmath>

#include "doctest.h"
#include "promptgrid/evolution.hpp"
#include "promptgrid/executor.hpp"
#include "promptgrid/rng.hpp"

using namespace promptgrid;

TEST_CASE("fitness breakdown") {
    SUBCASE("weighted combination at fixed inputs") {
        // mean 0.8, sharpe_norm 0.5 (degenerate stats), dro 0.7
        // -> 0.70*0.8 + 0.15*0.5 + 0.15*0.7 = 0.74
        const std::vector<double> scores{70, 80, 90, 70, 90};  // mean 80, dro (1 worst) 70
        const auto b = fitness(scores, PopulationStats{0.0, 0.0});
        CHECK(b.mean_score == doctest::Approx(0.8));
        CHECK(b.sharpe_norm == doctest::Approx(0.5));
        CHECK(b.dro_norm == doctest::Approx(0.7));
        CHECK(b.fitness == doctest::Approx(0.74));
    }
    SUBCASE("perfect scores") {
        const auto b = fitness(std::vector<double>(8, 100.0), PopulationStats{0.0, 0.0});
        CHECK(b.mean_score == doctest::Approx(1.0));
        CHECK(b.dro_norm == doctest::Approx(1.0));
    }
    SUBCASE("worst-20% tail picks exactly ceil(0.2 n) scores") {
        const auto b = fitness({100, 0, 0, 0, 0}, PopulationStats{0.0, 0.0});
        // ceil(0.2*5) = 1 worst score: the 0.
        CHECK(b.dro_norm == doctest::Approx(0.0));
        const auto b2 = fitness({100, 100, 100, 100, 100, 0}, PopulationStats{0.0, 0.0});
        // ceil(0.2*6) = 2 worst: {0, 100} -> 0.5
        CHECK(b2.dro_norm == doctest::Approx(0.5));
    }
    SUBCASE("identity holds for random inputs") {
        Xoshiro256pp rng(3, 0);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> scores;
            for (int i = 0; i < 7; ++i) scores.push_back(rng.uniform() * 100.0);
            const auto b = fitness(scores, PopulationStats{0.2, 30.0});
            CHECK(std::abs(b.fitness - (0.70 * b.mean_score + 0.15 * b.sharpe_norm +
                                        0.15 * b.dro_norm)) < 1e-12);
        }
    }
    SUBCASE("sharpe min-max normalization across a population") {
        const std::vector<std::vector<double>> population{
            {50, 50, 50}, {60, 62, 64}, {90, 10, 50}};
        std::vector<double> sharpes;
        for (const auto& s : population) sharpes.push_back(sharpe_raw(s));
        const auto stats = population_stats(sharpes);
        double lo = 2.0, hi = -1.0;
        for (const auto& s : population) {
            const auto b = fitness(s, stats);
            lo = std::min(lo, b.sharpe_norm);
            hi = std::max(hi, b.sharpe_norm);
        }
        CHECK(lo == doctest::Approx(0.0));
        CHECK(hi == doctest::Approx(1.0));
    }
}

TEST_CASE("update_weights") {
    SUBCASE("worked blend example") {
        // Targets sum to one: 0.45 for targeted mutation, 0.11 for the rest.
        OperatorWeights w;
        std::array<std::vector<double>, 6> offspring;
        offspring[0] = {0.45};
        for (std::size_t i = 1; i < 6; ++i) offspring[i] = {0.11};
        const auto next = update_weights(w, offspring);
        CHECK(next.weights[0] == doctest::Approx(0.7 * 0.25 + 0.3 * 0.45));  // 0.31
    }
    SUBCASE("targets equal to current weights are a fixed point") {
        OperatorWeights w;
        std::array<std::vector<double>, 6> offspring;
        for (std::size_t i = 0; i < 6; ++i) offspring[i] = {w.weights[i]};
        const auto next = update_weights(w, offspring);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(next.weights[i] == doctest::Approx(w.weights[i]).epsilon(1e-12));
        }
    }
    SUBCASE("operators without offspring keep their weight as target") {
        OperatorWeights w;
        std::array<std::vector<double>, 6> offspring;  // all empty
        const auto next = update_weights(w, offspring);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(next.weights[i] == doctest::Approx(w.weights[i]).epsilon(1e-12));
        }
    }
    SUBCASE("any update keeps a floored distribution") {
        Xoshiro256pp rng(9, 1);
        OperatorWeights w;
        for (int rep = 0; rep < 200; ++rep) {
            std::array<std::vector<double>, 6> offspring;
            for (std::size_t i = 0; i < 6; ++i) {
                const auto count = rng.uniform_below(4);
                for (std::uint64_t c = 0; c < count; ++c) {
                    offspring[i].push_back(rng.uniform());
                }
            }
            w = update_weights(w, offspring);
            double sum = 0.0;
            for (double weight : w.weights) {
                CHECK(weight >= w.floor - 1e-12);
                sum += weight;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

namespace {

StructuredPrompt sample_prompt() {
    StructuredPrompt p;
    p.role = "You are a referee.";
    p.task = "Decide which answer is better.";
    p.constraints = "Judge only on accuracy.";
    p.examples = "A beats B when A cites the text.";
    p.format = "One letter.";
    return p;
}

int differing_components(const StructuredPrompt& x, const StructuredPrompt& y) {
    int count = 0;
    for (auto name : StructuredPrompt::component_names) {
        if (x.component(name) != y.component(name)) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("apply_operator") {
    RuleTransformer transformer;
    const auto parent = sample_prompt();

    SUBCASE("targeted mutation changes at most one component, others byte-identical") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto child = apply_operator(EvolutionOperator::TargetedMutation, {parent},
                                              "task", transformer, seed);
            CHECK(differing_components(parent, child) <= 1);
        }
    }
    SUBCASE("crossover takes every component from one of the parents") {
        auto other = sample_prompt();
        other.role = "You are an auditor.";
        other.task = "Rank the answers.";
        other.constraints = "Prefer brevity.";
        other.examples = "";
        other.format = "JSON verdict.";
        bool mixed = false;
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto child = apply_operator(EvolutionOperator::LlmCrossover, {parent, other},
                                              "task", transformer, seed);
            int from_parent = 0, from_other = 0;
            for (auto name : StructuredPrompt::component_names) {
                const auto& text = child.component(name);
                const bool p = text == parent.component(name);
                const bool o = text == other.component(name);
                CHECK((p || o));
                if (p && !o) ++from_parent;
                if (o && !p) ++from_other;
            }
            if (from_parent > 0 && from_other > 0) mixed = true;
        }
        CHECK(mixed);
    }
    SUBCASE("crossover requires two parents") {
        CHECK_THROWS_AS(apply_operator(EvolutionOperator::LlmCrossover, {parent}, "task",
                                       transformer, 0),
                        Error);
    }
    SUBCASE("random generation needs no parents and yields a task") {
        const auto child = apply_operator(EvolutionOperator::RandomGeneration, {},
                                          "Extract all dates from the input.", transformer, 5);
        CHECK_FALSE(child.task.empty());
    }
    SUBCASE("simplification never grows components") {
        const auto child = apply_operator(EvolutionOperator::Simplification, {parent}, "task",
                                          transformer, 5);
        for (auto name : StructuredPrompt::component_names) {
            CHECK(child.component(name).size() <= parent.component(name).size());
        }
    }
    SUBCASE("identical seeds give identical offspring") {
        for (auto op : {EvolutionOperator::TargetedMutation, EvolutionOperator::RandomMutation,
                        EvolutionOperator::Exploration}) {
            const auto c1 = apply_operator(op, {parent}, "task", transformer, 77);
            const auto c2 = apply_operator(op, {parent}, "task", transformer, 77);
            CHECK(c1 == c2);
        }
    }
}

namespace {

// Scores depend only on the call index: vectors {m-10, m, m+10} so all
// candidates share the same spread and Sharpe ordering follows the mean.
class ScriptedEvaluator {
  public:
    explicit ScriptedEvaluator(std::map<int, double> bumps) : bumps_(std::move(bumps)) {}
    std::vector<double> operator()(const std::string&) {
        ++calls_;
        const auto it = bumps_.find(calls_);
        const double m = it == bumps_.end() ? 50.0 : it->second;
        return {m - 10.0, m, m + 10.0};
    }
    int calls() const { return calls_; }

  private:
    std::map<int, double> bumps_;
    int calls_ = 0;
};

EvolutionConfig trace_config() {
    EvolutionConfig cfg;
    cfg.budget_cap = 200;
    cfg.seed = 4;
    return cfg;
}

}  // namespace

TEST_CASE("stopping rule traces") {
    RuleTransformer transformer;

    SUBCASE("improvements at generations 1, 2, 3 then none: stops after generation 7") {
        // Seeding consumes calls 1-30; generation g covers calls 31+15(g-1)..30+15g.
        ScriptedEvaluator script({{31, 60.0}, {46, 61.0}, {61, 62.0}});
        PromptEvaluator eval = [&](const std::string& p) { return script(p); };
        const auto result =
            evolve("Task: do the work", "do the work", eval, transformer, trace_config());
        REQUIRE(result.history.size() >= 2);
        CHECK(result.history.back().generation == 7);
        CHECK(result.history.back().stagnation == 4);
        CHECK_FALSE(result.budget_exhausted);
        CHECK(result.history[1].improved);
        CHECK(result.history[2].improved);
        CHECK(result.history[3].improved);
        for (std::size_t g = 4; g < result.history.size(); ++g) {
            CHECK_FALSE(result.history[g].improved);
        }
    }

    SUBCASE("no improvement after seeding: the minimum of 5 generations binds") {
        ScriptedEvaluator script({});
        PromptEvaluator eval = [&](const std::string& p) { return script(p); };
        const auto result =
            evolve("Task: do the work", "do the work", eval, transformer, trace_config());
        CHECK(result.history.back().generation == 5);
        CHECK(result.history.back().stagnation == 5);
        CHECK_FALSE(result.budget_exhausted);
        CHECK(script.calls() == 30 + 5 * 15);
    }
}

TEST_CASE("evolve mechanics") {
    RuleTransformer transformer;

    SUBCASE("elitism: best-ever fitness is non-decreasing across history") {
        ExecutorConfig mock_cfg;
        mock_cfg.mock_prompt_sd = 6.0;
        mock_cfg.mock_noise_sd = 3.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            PromptEvaluator eval = [&](const std::string& prompt) {
                std::vector<double> scores;
                for (int q = 0; q < 5; ++q) {
                    scores.push_back(
                        mock_score("fixed upstream", prompt, "q" + std::to_string(q), mock_cfg));
                }
                return scores;
            };
            EvolutionConfig cfg;
            cfg.seed = seed;
            const auto result = evolve("Task: answer well", "answer well", eval, transformer, cfg);
            double prev = -1.0;
            for (const auto& record : result.history) {
                CHECK(record.best_ever_fitness >= prev - 1e-12);
                prev = record.best_ever_fitness;
            }
            CHECK(result.evaluations_used <= cfg.budget_cap);
        }
    }

    SUBCASE("budget cap truncates the run and flags it") {
        ScriptedEvaluator script({});
        PromptEvaluator eval = [&](const std::string& p) { return script(p); };
        EvolutionConfig cfg;
        cfg.budget_cap = 52;  // seeds 30 + one full generation + a partial one
        const auto result = evolve("Task: do the work", "nothing", eval, transformer, cfg);
        CHECK(result.budget_exhausted);
        CHECK(result.evaluations_used == 52);
        CHECK(script.calls() == 52);
    }

    SUBCASE("rule-backed determinism: identical config and seed, identical history") {
        ExecutorConfig mock_cfg;
        mock_cfg.mock_prompt_sd = 4.0;
        PromptEvaluator eval = [&](const std::string& prompt) {
            std::vector<double> scores;
            for (int q = 0; q < 4; ++q) {
                scores.push_back(mock_score("up", prompt, "q" + std::to_string(q), mock_cfg));
            }
            return scores;
        };
        EvolutionConfig cfg;
        cfg.seed = 12;
        const auto r1 = evolve("Task: answer", "answer", eval, transformer, cfg);
        const auto r2 = evolve("Task: answer", "answer", eval, transformer, cfg);
        REQUIRE(r1.history.size() == r2.history.size());
        CHECK(r1.best_prompt == r2.best_prompt);
        for (std::size_t g = 0; g < r1.history.size(); ++g) {
            CHECK(r1.history[g].to_json() == r2.history[g].to_json());
        }
    }

    SUBCASE("fitness identity holds for every logged breakdown") {
        ScriptedEvaluator script({{31, 70.0}, {40, 64.0}});
        PromptEvaluator eval = [&](const std::string& p) { return script(p); };
        const auto result =
            evolve("Task: do the work", "work", eval, transformer, trace_config());
        int checked = 0;
        for (const auto& record : result.history) {
            for (const auto& b : record.population) {
                CHECK(std::abs(b.fitness - (0.70 * b.mean_score + 0.15 * b.sharpe_norm +
                                            0.15 * b.dro_norm)) < 1e-12);
                ++checked;
            }
        }
        CHECK(checked > 100);
    }

    SUBCASE("planted format optimum is found within budget") {
        RuleTransformer::Pools pools = RuleTransformer::default_pools();
        pools["format"].push_back("Respond as minified JSON.");
        RuleTransformer planted(pools);
        PromptEvaluator eval = [](const std::string& prompt) {
            const bool hit = prompt.find("Respond as minified JSON.") != std::string::npos;
            const double m = hit ? 90.0 : 50.0;
            return std::vector<double>{m - 5.0, m, m + 5.0};
        };
        int found = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            EvolutionConfig cfg;
            cfg.seed = seed;
            cfg.budget_cap = 100;
            const auto result = evolve("Task: answer the question", "answer the question", eval,
                                       planted, cfg);
            if (result.best_prompt.flatten().find("Respond as minified JSON.") !=
                std::string::npos) {
                ++found;
            }
        }
        CHECK(found == 5);
    }

    SUBCASE("holdout evaluator is reported") {
        ScriptedEvaluator script({});
        PromptEvaluator eval = [&](const std::string& p) { return script(p); };
        PromptEvaluator holdout = [](const std::string&) {
            return std::vector<double>{80.0, 90.0};
        };
        EvolutionConfig cfg;
        cfg.budget_cap = 40;
        const auto result = evolve("Task: t", "t", eval, transformer, cfg, &holdout);
        REQUIRE(result.holdout_score.has_value());
        CHECK(*result.holdout_score == doctest::Approx(85.0));
    }
}

TEST_CASE("evolution config validation") {
    EvolutionConfig cfg;
    cfg.elite_count = 20;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.seed_keep = 30;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.budget_cap = 5;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("flatten-decompose round trip scores identically under the mock") {
    ExecutorConfig cfg;
    const std::string canonical =
        "Role: You are concise.\nTask: Answer the question.\nFormat: One sentence.";
    const auto roundtripped = decompose_prompt(canonical).flatten();
    CHECK(roundtripped == canonical);
    CHECK(mock_score("up", canonical, "q0", cfg) == mock_score("up", roundtripped, "q0", cfg));
}
