#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "promptgrid/executor.hpp"
#include "promptgrid/prompt.hpp"

namespace promptgrid {

/// One prompt-rewriting request. `seed` fully determines rule-backed output,
/// which is what makes the evolutionary search testable offline.
struct TransformRequest {
    enum class Kind {
        Paraphrase,        // rephrase a whole prompt, keep intent
        ComponentRewrite,  // replace one named component
        Simplify,          // shorten a component
        Explore,           // unconstrained whole-prompt variation
        Generate,          // fresh prompt from a task description
    };
    Kind kind = Kind::Paraphrase;
    std::string text;              // base text (whole prompt or component)
    std::string component;        // for ComponentRewrite/Simplify
    std::string task_description;  // for Generate/Explore context
    double variation = 0.5;       // 0 = conservative, 1 = wild
    std::uint64_t seed = 0;
};

class PromptTransformer {
  public:
    virtual ~PromptTransformer() = default;
    virtual std::string transform(const TransformRequest& req) = 0;
};

/// Deterministic transformer backed by phrase pools. Pools are injectable so
/// tests can plant specific strings in the reachable neighborhood.
class RuleTransformer final : public PromptTransformer {
  public:
    using Pools = std::map<std::string, std::vector<std::string>>;

    RuleTransformer();
    explicit RuleTransformer(Pools pools);

    std::string transform(const TransformRequest& req) override;

    static Pools default_pools();

  private:
    std::string rewrite_component(const std::string& name, const std::string& current,
                                  std::uint64_t seed, double variation) const;
    Pools pools_;
};

/// LLM-backed transformer: meta-prompts through an executor's single-call
/// path. Retries bounded; throws TransformerFailureError when the model keeps
/// returning unusable text.
class LlmTransformer final : public PromptTransformer {
  public:
    explicit LlmTransformer(Executor& executor) : executor_(executor) {}
    std::string transform(const TransformRequest& req) override;

  private:
    Executor& executor_;
};

}  // namespace promptgrid
