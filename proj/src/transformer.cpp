#include "promptgrid/transformer.hpp"

#include <algorithm>
#include <cctype>

#include "promptgrid/rng.hpp"

namespace promptgrid {

RuleTransformer::Pools RuleTransformer::default_pools() {
    return {
        {"role",
         {"You are a careful assistant.", "You are a meticulous domain expert.",
          "You are a concise analyst.", "You are a thorough reviewer.",
          "You are a pragmatic specialist."}},
        {"task_prefix",
         {"", "Primary objective: ", "Your job: ", "Focus on the following. ",
          "Work through this step by step. "}},
        {"constraints",
         {"Be accurate and concise.", "Avoid speculation; state only what follows from the input.",
          "Keep the answer under 200 words.", "Cite the relevant part of the input.",
          "Answer directly without preamble."}},
        {"examples", {"", "", "Example: for a short input, give a one-sentence answer."}},
        {"format",
         {"Answer in plain prose.", "Answer with a short bulleted list.",
          "Start with a one-line summary.", "Use numbered steps.",
          "End with a single-line conclusion."}},
    };
}

RuleTransformer::RuleTransformer() : pools_(default_pools()) {}
RuleTransformer::RuleTransformer(Pools pools) : pools_(std::move(pools)) {
    for (const char* key : {"role", "task_prefix", "constraints", "examples", "format"}) {
        if (pools_[key].empty()) pools_[key] = default_pools()[key];
    }
}

std::string RuleTransformer::rewrite_component(const std::string& name, const std::string& current,
                                               std::uint64_t seed, double variation) const {
    Xoshiro256pp rng(seed, fnv1a64(name));
    if (name == "task") {
        // The task carries the semantics; vary its framing, keep its text.
        const auto& prefixes = pools_.at("task_prefix");
        std::string base = current;
        // Strip any framing prefix applied by a previous rewrite.
        for (const auto& prefix : prefixes) {
            if (!prefix.empty() && base.rfind(prefix, 0) == 0) {
                base = base.substr(prefix.size());
                break;
            }
        }
        return prefixes[rng.uniform_below(prefixes.size())] + base;
    }
    const auto& pool = pools_.at(name);
    std::string candidate = pool[rng.uniform_below(pool.size())];
    if (candidate == current && pool.size() > 1 && variation > 0.0) {
        candidate = pool[rng.uniform_below(pool.size())];
    }
    return candidate;
}

std::string RuleTransformer::transform(const TransformRequest& req) {
    Xoshiro256pp rng(req.seed, 0xabcdef);
    switch (req.kind) {
        case TransformRequest::Kind::ComponentRewrite:
        case TransformRequest::Kind::Simplify: {
            if (req.kind == TransformRequest::Kind::Simplify) {
                // Shorten: keep the first sentence (or the whole text if there
                // is only one).
                const auto stop = req.text.find(". ");
                return stop == std::string::npos ? req.text : req.text.substr(0, stop + 1);
            }
            return rewrite_component(req.component, req.text, req.seed, req.variation);
        }
        case TransformRequest::Kind::Paraphrase: {
            StructuredPrompt prompt = parse_structured(req.text);
            // Rewrite one or two components depending on variation.
            const int rewrites = req.variation > 0.66 ? 2 : 1;
            for (int r = 0; r < rewrites; ++r) {
                const auto& name =
                    StructuredPrompt::component_names[rng.uniform_below(5)];
                auto& text = prompt.component(name);
                text = rewrite_component(std::string(name), text, rng.next(), req.variation);
            }
            return prompt.flatten();
        }
        case TransformRequest::Kind::Explore: {
            // Fresh draw for most components, keep the task text.
            StructuredPrompt prompt = parse_structured(req.text);
            for (auto name : {"role", "constraints", "examples", "format"}) {
                prompt.component(name) = rewrite_component(name, prompt.component(name),
                                                           rng.next(), 1.0);
            }
            prompt.task = rewrite_component("task", prompt.task, rng.next(), 1.0);
            return prompt.flatten();
        }
        case TransformRequest::Kind::Generate: {
            StructuredPrompt prompt;
            prompt.task = req.task_description.empty() ? req.text : req.task_description;
            if (prompt.task.empty()) throw TransformerFailureError("nothing to generate from");
            prompt.role = rewrite_component("role", "", rng.next(), 1.0);
            prompt.format = rewrite_component("format", "", rng.next(), 1.0);
            if (rng.uniform() < 0.5) {
                prompt.constraints = rewrite_component("constraints", "", rng.next(), 1.0);
            }
            return prompt.flatten();
        }
    }
    throw TransformerFailureError("unhandled transform kind");
}

namespace {

std::string meta_prompt(const TransformRequest& req) {
    using Kind = TransformRequest::Kind;
    switch (req.kind) {
        case Kind::Paraphrase:
            return "Rewrite the following system prompt so it keeps the same intent but uses "
                   "different wording and structure. Reply with the rewritten prompt only.\n\n" +
                   req.text;
        case Kind::ComponentRewrite:
            return "Rewrite only the `" + req.component +
                   "` part of a system prompt. Current text of that part:\n\n" + req.text +
                   "\n\nReply with the replacement text only.";
        case Kind::Simplify:
            return "Shorten the following prompt text while keeping its meaning. Reply with the "
                   "shortened text only.\n\n" +
                   req.text;
        case Kind::Explore:
            return "Write a substantially different system prompt for the same task. Be creative "
                   "about strategy, tone and structure. Reply with the new prompt only.\n\nTask "
                   "description:\n" +
                   (req.task_description.empty() ? req.text : req.task_description) +
                   "\n\nCurrent prompt:\n" + req.text;
        case Kind::Generate:
            return "Write a system prompt for the following task. Structure it as labeled "
                   "sections (Role:, Task:, Constraints:, Examples:, Format:), leaving out "
                   "sections you do not need. Reply with the prompt only.\n\n" +
                   (req.task_description.empty() ? req.text : req.task_description);
    }
    throw TransformerFailureError("unhandled transform kind");
}

}  // namespace

std::string LlmTransformer::transform(const TransformRequest& req) {
    const Question q{"transform", meta_prompt(req)};
    const std::string system =
        "You rewrite and generate prompts for language-model pipelines. Follow the instruction "
        "exactly and reply with the requested text only, no commentary.";
    for (int attempt = 0; attempt < 3; ++attempt) {
        const auto transcript = executor_.run_single(system, q);
        std::string reply = transcript.agent_b_output;
        // Trim whitespace and surrounding code fences.
        auto not_space = [](unsigned char c) { return !std::isspace(c); };
        reply.erase(reply.begin(), std::find_if(reply.begin(), reply.end(), not_space));
        reply.erase(std::find_if(reply.rbegin(), reply.rend(), not_space).base(), reply.end());
        if (reply.rfind("```", 0) == 0) {
            const auto first_newline = reply.find('\n');
            const auto last_fence = reply.rfind("```");
            if (first_newline != std::string::npos && last_fence > first_newline) {
                reply = reply.substr(first_newline + 1, last_fence - first_newline - 1);
            }
        }
        if (!reply.empty()) return reply;
    }
    throw TransformerFailureError("transformer returned empty text on 3 attempts");
}

}  // namespace promptgrid
