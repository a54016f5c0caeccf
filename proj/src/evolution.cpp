#include "promptgrid/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptgrid/rng.hpp"

namespace promptgrid {

using nlohmann::json;

std::string to_string(EvolutionOperator op) {
    switch (op) {
        case EvolutionOperator::TargetedMutation: return "targeted_mutation";
        case EvolutionOperator::LlmCrossover: return "llm_crossover";
        case EvolutionOperator::RandomMutation: return "random_mutation";
        case EvolutionOperator::Exploration: return "exploration";
        case EvolutionOperator::Simplification: return "simplification";
        case EvolutionOperator::RandomGeneration: return "random_generation";
    }
    return "unknown";
}

json FitnessBreakdown::to_json() const {
    return json{{"mean_score", mean_score},
                {"sharpe_norm", sharpe_norm},
                {"dro_norm", dro_norm},
                {"fitness", fitness},
                {"per_question_scores", per_question_scores}};
}

double sharpe_raw(const std::vector<double>& per_question_scores) {
    if (per_question_scores.empty()) throw Error("sharpe_raw requires at least one score");
    const double n = double(per_question_scores.size());
    const double mean =
        std::accumulate(per_question_scores.begin(), per_question_scores.end(), 0.0) / n;
    double var = 0.0;
    for (double s : per_question_scores) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / n);
    return mean / (sd + 1e-6);
}

PopulationStats population_stats(const std::vector<double>& raw_sharpes) {
    if (raw_sharpes.empty()) return {0.0, 0.0};
    const auto [lo, hi] = std::minmax_element(raw_sharpes.begin(), raw_sharpes.end());
    return {*lo, *hi};
}

FitnessBreakdown fitness(const std::vector<double>& per_question_scores,
                         const PopulationStats& stats) {
    if (per_question_scores.empty()) throw Error("fitness requires at least one score");
    FitnessBreakdown breakdown;
    breakdown.per_question_scores = per_question_scores;

    const double n = double(per_question_scores.size());
    const double mean =
        std::accumulate(per_question_scores.begin(), per_question_scores.end(), 0.0) / n;
    breakdown.mean_score = mean / 100.0;

    const double raw = sharpe_raw(per_question_scores);
    const double range = stats.sharpe_max - stats.sharpe_min;
    breakdown.sharpe_norm = range > 1e-12 ? (raw - stats.sharpe_min) / range : 0.5;
    breakdown.sharpe_norm = std::clamp(breakdown.sharpe_norm, 0.0, 1.0);

    // Worst-tail mean (CVaR at the 20% tail): ceil(0.2 * q) lowest scores.
    std::vector<double> sorted = per_question_scores;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t tail = std::size_t(std::ceil(0.2 * n));
    breakdown.dro_norm =
        std::accumulate(sorted.begin(), sorted.begin() + long(tail), 0.0) / double(tail) / 100.0;

    breakdown.fitness = kFitnessMeanWeight * breakdown.mean_score +
                        kFitnessSharpeWeight * breakdown.sharpe_norm +
                        kFitnessDroWeight * breakdown.dro_norm;
    return breakdown;
}

json OperatorWeights::to_json() const {
    json j;
    for (auto op : kAllOperators) j[to_string(op)] = (*this)[op];
    return j;
}

OperatorWeights update_weights(const OperatorWeights& w,
                               const std::array<std::vector<double>, 6>& offspring_fitness) {
    // Targets proportional to mean offspring fitness; silent operators keep
    // their current weight as target.
    std::array<double, 6> target{};
    double target_sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        if (offspring_fitness[i].empty()) {
            target[i] = w.weights[i];
        } else {
            target[i] = std::accumulate(offspring_fitness[i].begin(), offspring_fitness[i].end(),
                                        0.0) /
                        double(offspring_fitness[i].size());
        }
        target_sum += target[i];
    }
    OperatorWeights next = w;
    if (target_sum <= 0.0) return next;  // nothing informative this generation
    for (std::size_t i = 0; i < 6; ++i) {
        next.weights[i] =
            (1.0 - w.blend_rate) * w.weights[i] + w.blend_rate * (target[i] / target_sum);
    }
    // Floor then renormalize the head-room above the floor, so entries stay
    // exactly at or above the floor and sum to one.
    const double floor_total = w.floor * 6.0;
    double excess_sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        next.weights[i] = std::max(next.weights[i], w.floor);
        excess_sum += next.weights[i] - w.floor;
    }
    if (excess_sum <= 0.0) {
        next.weights.fill(1.0 / 6.0);
        return next;
    }
    const double scale = (1.0 - floor_total) / excess_sum;
    for (std::size_t i = 0; i < 6; ++i) {
        next.weights[i] = w.floor + (next.weights[i] - w.floor) * scale;
    }
    return next;
}

StructuredPrompt decompose_prompt(const std::string& text, PromptTransformer* llm) {
    if (text.empty()) throw EmptyPromptError("decompose_prompt requires non-empty text");
    if (llm == nullptr) return parse_structured(text);
    TransformRequest req;
    req.kind = TransformRequest::Kind::Generate;
    req.task_description =
        "Reorganize this existing prompt into the labeled sections without changing its "
        "content:\n\n" +
        text;
    return parse_structured(llm->transform(req));
}

StructuredPrompt apply_operator(EvolutionOperator op, const std::vector<StructuredPrompt>& parents,
                                const std::string& task_description, PromptTransformer& transformer,
                                std::uint64_t seed) {
    Xoshiro256pp rng(seed, 0x6f70657261746f72ull);
    const auto need_parents = [&](std::size_t count) {
        if (parents.size() < count) {
            throw Error(to_string(op) + " needs " + std::to_string(count) + " parent(s)");
        }
    };
    switch (op) {
        case EvolutionOperator::TargetedMutation: {
            need_parents(1);
            StructuredPrompt child = parents[0];
            const auto name = StructuredPrompt::component_names[rng.uniform_below(5)];
            TransformRequest req;
            req.kind = TransformRequest::Kind::ComponentRewrite;
            req.component = std::string(name);
            req.text = child.component(name);
            req.variation = 0.4;
            req.seed = rng.next();
            child.component(name) = transformer.transform(req);
            if (child.task.empty()) child.task = parents[0].task;  // task must survive
            return child;
        }
        case EvolutionOperator::LlmCrossover: {
            need_parents(2);
            StructuredPrompt child;
            for (auto name : StructuredPrompt::component_names) {
                const StructuredPrompt& source = (rng.next() & 1) ? parents[1] : parents[0];
                child.component(name) = source.component(name);
            }
            if (child.task.empty()) child.task = parents[0].task;
            return child;
        }
        case EvolutionOperator::RandomMutation: {
            need_parents(1);
            StructuredPrompt child = parents[0];
            const auto name = StructuredPrompt::component_names[rng.uniform_below(5)];
            TransformRequest req;
            req.kind = TransformRequest::Kind::ComponentRewrite;
            req.component = std::string(name);
            req.text = child.component(name);
            req.variation = 1.0;
            req.seed = rng.next();
            child.component(name) = transformer.transform(req);
            if (child.task.empty()) child.task = parents[0].task;
            return child;
        }
        case EvolutionOperator::Exploration: {
            need_parents(1);
            TransformRequest req;
            req.kind = TransformRequest::Kind::Explore;
            req.text = parents[0].flatten();
            req.task_description = task_description;
            req.variation = 1.0;
            req.seed = rng.next();
            auto child = parse_structured(transformer.transform(req));
            if (child.task.empty()) child.task = parents[0].task;
            return child;
        }
        case EvolutionOperator::Simplification: {
            need_parents(1);
            StructuredPrompt child = parents[0];
            for (auto name : StructuredPrompt::component_names) {
                if (name == "task") continue;
                auto& text = child.component(name);
                if (text.empty()) continue;
                TransformRequest req;
                req.kind = TransformRequest::Kind::Simplify;
                req.component = std::string(name);
                req.text = text;
                req.seed = rng.next();
                text = transformer.transform(req);
            }
            return child;
        }
        case EvolutionOperator::RandomGeneration: {
            TransformRequest req;
            req.kind = TransformRequest::Kind::Generate;
            req.task_description = task_description;
            req.variation = 1.0;
            req.seed = rng.next();
            auto child = parse_structured(transformer.transform(req));
            if (child.task.empty()) child.task = task_description;
            return child;
        }
    }
    throw Error("unhandled operator");
}

void EvolutionConfig::validate() const {
    if (population_size < 2) throw Error("population_size must be >= 2");
    if (elite_count < 1 || elite_count >= population_size) {
        throw Error("elite_count must be in [1, population_size)");
    }
    if (seed_count < 1) throw Error("seed_count must be >= 1");
    if (seed_keep < 1 || seed_keep > seed_count) throw Error("seed_keep must be in [1, seed_count]");
    if (min_generations < 0) throw Error("min_generations must be >= 0");
    if (stagnation_limit < 1) throw Error("stagnation_limit must be >= 1");
    if (budget_cap < seed_count) throw Error("budget_cap must cover at least the seed batch");
    if (!(operator_floor >= 0.0) || operator_floor * 6.0 >= 1.0) {
        throw Error("operator_floor must be in [0, 1/6)");
    }
    if (!(blend_rate >= 0.0 && blend_rate <= 1.0)) throw Error("blend_rate must be in [0, 1]");
}

json GenerationRecord::to_json() const {
    json pop = json::array();
    for (const auto& b : population) pop.push_back(b.to_json());
    json usage;
    for (auto op : kAllOperators) usage[to_string(op)] = operator_usage[std::size_t(op)];
    return json{{"generation", generation},
                {"best_fitness", best_fitness},
                {"best_ever_fitness", best_ever_fitness},
                {"improved", improved},
                {"stagnation", stagnation},
                {"weights", weights.to_json()},
                {"operator_usage", usage},
                {"population", pop}};
}

namespace {

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

// Breakdowns for a whole population with Sharpe min-max taken across it.
std::vector<FitnessBreakdown> population_fitness(
    const std::vector<std::vector<double>>& per_candidate_scores) {
    std::vector<double> sharpes;
    sharpes.reserve(per_candidate_scores.size());
    for (const auto& scores : per_candidate_scores) sharpes.push_back(sharpe_raw(scores));
    const PopulationStats stats =
        per_candidate_scores.size() > 1 ? population_stats(sharpes) : PopulationStats{0.0, 0.0};
    std::vector<FitnessBreakdown> breakdowns;
    breakdowns.reserve(per_candidate_scores.size());
    for (const auto& scores : per_candidate_scores) breakdowns.push_back(fitness(scores, stats));
    return breakdowns;
}

// Fitness-proportional parent pick; uniform when total fitness is zero.
std::size_t pick_parent(const std::vector<EvaluatedCandidate>& population, Xoshiro256pp& rng,
                        std::optional<std::size_t> exclude = std::nullopt) {
    double total = 0.0;
    for (std::size_t i = 0; i < population.size(); ++i) {
        if (exclude && *exclude == i) continue;
        total += std::max(0.0, population[i].breakdown.fitness);
    }
    if (total <= 0.0) {
        for (;;) {
            const auto i = std::size_t(rng.uniform_below(population.size()));
            if (!exclude || *exclude != i) return i;
        }
    }
    double ticket = rng.uniform() * total;
    for (std::size_t i = 0; i < population.size(); ++i) {
        if (exclude && *exclude == i) continue;
        ticket -= std::max(0.0, population[i].breakdown.fitness);
        if (ticket <= 0.0) return i;
    }
    return population.size() - 1;
}

EvolutionOperator sample_operator(const OperatorWeights& w, Xoshiro256pp& rng) {
    double ticket = rng.uniform();
    for (auto op : kAllOperators) {
        ticket -= w[op];
        if (ticket <= 0.0) return op;
    }
    return EvolutionOperator::RandomGeneration;
}

}  // namespace

EvolutionResult evolve(const std::string& baseline_prompt, const std::string& task_description,
                       const PromptEvaluator& evaluator, PromptTransformer& transformer,
                       const EvolutionConfig& config, const PromptEvaluator* holdout_evaluator) {
    config.validate();
    if (baseline_prompt.empty()) throw EmptyPromptError("evolve requires a baseline prompt");

    EvolutionResult result;
    int evaluations = 0;
    const auto budget_left = [&] { return config.budget_cap - evaluations; };
    const auto evaluate = [&](const std::string& flat) {
        ++evaluations;
        auto scores = evaluator(flat);
        if (scores.empty()) throw Error("evaluator returned no scores");
        return scores;
    };

    Xoshiro256pp rng(config.seed, 0x65766f6c7665ull);

    // ---- Seeding: baseline first (flat-then-decompose), then variations.
    std::vector<StructuredPrompt> seed_prompts;
    seed_prompts.push_back(decompose_prompt(baseline_prompt));
    for (int i = 1; i < config.seed_count; ++i) {
        TransformRequest req;
        req.kind = (i % 3 == 2) ? TransformRequest::Kind::Explore
                                : TransformRequest::Kind::Paraphrase;
        req.text = baseline_prompt;
        req.task_description = task_description;
        req.variation = 0.2 + 0.8 * double(i) / double(std::max(1, config.seed_count - 1));
        req.seed = rng.next();
        seed_prompts.push_back(parse_structured(transformer.transform(req)));
        if (seed_prompts.back().task.empty()) seed_prompts.back().task = seed_prompts[0].task;
    }

    std::vector<std::vector<double>> seed_scores;
    for (const auto& prompt : seed_prompts) {
        if (budget_left() <= 0) break;
        seed_scores.push_back(evaluate(prompt.flatten()));
    }
    seed_prompts.resize(seed_scores.size());

    // Keep the strongest seeds by raw training score.
    std::vector<std::size_t> order(seed_prompts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return mean_of(seed_scores[x]) > mean_of(seed_scores[y]);
    });
    const std::size_t keep = std::min<std::size_t>(std::size_t(config.seed_keep), order.size());

    std::vector<StructuredPrompt> member_prompts;
    std::vector<std::vector<double>> member_scores;
    std::vector<std::optional<EvolutionOperator>> member_ops;
    for (std::size_t i = 0; i < keep; ++i) {
        member_prompts.push_back(seed_prompts[order[i]]);
        member_scores.push_back(seed_scores[order[i]]);
        member_ops.push_back(std::nullopt);
    }
    // Pad the population with fresh random generations.
    while (int(member_prompts.size()) < config.population_size && budget_left() > 0) {
        auto child = apply_operator(EvolutionOperator::RandomGeneration, {},
                                    task_description.empty() ? baseline_prompt : task_description,
                                    transformer, rng.next());
        member_scores.push_back(evaluate(child.flatten()));
        member_prompts.push_back(std::move(child));
        member_ops.push_back(EvolutionOperator::RandomGeneration);
    }

    auto breakdowns = population_fitness(member_scores);
    std::vector<EvaluatedCandidate> population;
    for (std::size_t i = 0; i < member_prompts.size(); ++i) {
        population.push_back({member_prompts[i], breakdowns[i], member_ops[i], 0});
    }

    OperatorWeights weights;
    weights.blend_rate = config.blend_rate;
    weights.floor = config.operator_floor;

    double best_ever = -1.0;
    const auto track_best = [&](const EvaluatedCandidate& candidate) {
        if (candidate.breakdown.fitness > best_ever + 1e-9) {
            best_ever = candidate.breakdown.fitness;
            result.best_prompt = candidate.prompt;
            result.best_breakdown = candidate.breakdown;
            return true;
        }
        return false;
    };

    bool improved_any = false;
    for (const auto& candidate : population) improved_any |= track_best(candidate);

    GenerationRecord seeding;
    seeding.generation = 0;
    seeding.best_ever_fitness = best_ever;
    seeding.best_fitness = best_ever;
    seeding.improved = improved_any;
    seeding.weights = weights;
    for (const auto& b : breakdowns) seeding.population.push_back(b);
    result.history.push_back(std::move(seeding));

    // ---- Generations.
    int stagnation = 0;
    int generation = 0;
    bool out_of_budget = budget_left() <= 0;
    while (!out_of_budget) {
        ++generation;

        // Elites: top by fitness, stable against insertion order.
        std::vector<std::size_t> rank(population.size());
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        std::stable_sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) {
            return population[x].breakdown.fitness > population[y].breakdown.fitness;
        });

        std::vector<EvaluatedCandidate> next_population;
        std::vector<std::vector<double>> next_scores;
        const std::size_t elites = std::min<std::size_t>(std::size_t(config.elite_count),
                                                         population.size());
        for (std::size_t e = 0; e < elites; ++e) {
            next_population.push_back(population[rank[e]]);
            next_scores.push_back(population[rank[e]].breakdown.per_question_scores);
        }

        GenerationRecord record;
        record.generation = generation;
        std::array<std::vector<double>, 6> offspring_fitness;

        const int slots = config.population_size - int(elites);
        std::vector<std::pair<EvolutionOperator, std::size_t>> offspring_meta;
        for (int slot = 0; slot < slots; ++slot) {
            if (budget_left() <= 0) {
                out_of_budget = true;
                break;
            }
            const EvolutionOperator op = sample_operator(weights, rng);
            std::vector<StructuredPrompt> parents;
            if (op == EvolutionOperator::LlmCrossover) {
                const auto first = pick_parent(population, rng);
                const auto second =
                    population.size() > 1 ? pick_parent(population, rng, first) : first;
                parents = {population[first].prompt, population[second].prompt};
            } else if (op != EvolutionOperator::RandomGeneration) {
                parents = {population[pick_parent(population, rng)].prompt};
            }
            auto child = apply_operator(op, parents,
                                        task_description.empty() ? baseline_prompt
                                                                 : task_description,
                                        transformer, rng.next());
            auto scores = evaluate(child.flatten());
            record.operator_usage[std::size_t(op)] += 1;
            offspring_meta.emplace_back(op, next_scores.size());
            next_scores.push_back(std::move(scores));
            next_population.push_back(
                {std::move(child), FitnessBreakdown{}, op, generation});
        }

        // Re-normalize fitness across the new population (elites included).
        auto next_breakdowns = population_fitness(next_scores);
        for (std::size_t i = 0; i < next_population.size(); ++i) {
            next_population[i].breakdown = next_breakdowns[i];
        }
        for (const auto& [op, index] : offspring_meta) {
            offspring_fitness[std::size_t(op)].push_back(next_breakdowns[index].fitness);
        }
        population = std::move(next_population);

        bool improved = false;
        double generation_best = -1.0;
        for (const auto& candidate : population) {
            generation_best = std::max(generation_best, candidate.breakdown.fitness);
            improved |= track_best(candidate);
        }
        stagnation = improved ? 0 : stagnation + 1;

        weights = update_weights(weights, offspring_fitness);

        record.best_fitness = generation_best;
        record.best_ever_fitness = best_ever;
        record.improved = improved;
        record.stagnation = stagnation;
        record.weights = weights;
        for (const auto& b : population) record.population.push_back(b.breakdown);
        result.history.push_back(std::move(record));

        if (out_of_budget || budget_left() <= 0) {
            out_of_budget = true;
            break;
        }
        if (generation >= config.min_generations && stagnation >= config.stagnation_limit) break;
    }

    result.evaluations_used = evaluations;
    result.budget_exhausted = out_of_budget;
    result.best_train_score = mean_of(result.best_breakdown.per_question_scores);
    if (holdout_evaluator != nullptr) {
        result.holdout_score = mean_of((*holdout_evaluator)(result.best_prompt.flatten()));
    }
    return result;
}

}  // namespace promptgrid
