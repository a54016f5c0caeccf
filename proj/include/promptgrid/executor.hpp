#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptgrid/common.hpp"

namespace promptgrid {

struct Question {
    std::string id;
    std::string input;
};

/// Backend-agnostic executor configuration. The `mock_*` fields only matter
/// for the mock backend; everything else describes the HTTP chat-completion
/// backend. Credentials are looked up from the environment variable named in
/// `api_key_env` at call time and never stored or logged.
struct ExecutorConfig {
    std::string backend = "mock";  // mock | http
    std::string endpoint = "http://localhost:8080/v1/chat/completions";
    std::string model_id = "mock-model";
    std::string api_key_env = "PROMPTGRID_API_KEY";
    double timeout_seconds = 60.0;
    int max_retries = 3;
    double retry_backoff_seconds = 0.5;  // doubles per attempt
    double temperature = 0.0;
    int max_tokens = 1024;
    int max_concurrency = 4;

    // Mock scoring knobs: additive effects derived from content hashes, plus
    // an optional output-structure bonus used to plant optimization headroom.
    std::uint64_t mock_seed = 0;
    double mock_base = 60.0;
    double mock_question_sd = 10.0;
    double mock_prompt_sd = 0.5;
    double mock_interaction_sd = 0.0;
    double mock_noise_sd = 2.0;
    std::string mock_marker;        // substring of a prompt that triggers the bonus
    double mock_marker_bonus = 0.0;

    void validate() const;
};

struct TokenCounts {
    long long input_tokens = 0;
    long long output_tokens = 0;
};

/// Record of one two-agent pipeline execution. Prompt hashes are
/// content-addressed digests of the exact prompt text; prompts themselves are
/// not stored here.
struct PipelineTranscript {
    std::string question_id;
    std::string question_input;
    std::string agent_a_prompt_hash;
    std::string agent_b_prompt_hash;
    std::string agent_a_output;
    std::string agent_b_output;
    double latency_seconds = 0.0;
    TokenCounts agent_a_tokens;
    TokenCounts agent_b_tokens;
};

struct JudgeScore {
    double value = 0.0;  // points in [0, 100]
    std::string raw_judgment;
    int parse_attempts = 0;
    TokenCounts tokens;
};

/// Header line separating the question from the upstream agent's output in
/// Agent B's user message. Fixed so transcripts are greppable.
inline constexpr std::string_view kUpstreamDelimiter = "--- UPSTREAM AGENT OUTPUT ---";

/// Builds Agent B's user message: question, delimiter, Agent A's output.
std::string compose_agent_b_input(const std::string& question_input,
                                  const std::string& agent_a_output);

/// Extracts the score from a judge reply: the first number in [0, 100] on a
/// line of the form "SCORE: <number>". Returns nullopt when absent or out of
/// range.
std::optional<double> parse_score_line(const std::string& judgment);

class Executor {
  public:
    explicit Executor(ExecutorConfig cfg);
    virtual ~Executor() = default;

    const ExecutorConfig& config() const { return cfg_; }

    /// Digest over the identity-relevant config fields (backend, model,
    /// sampling and mock parameters). Cache keys include it so results from
    /// different executors never collide.
    const std::string& digest() const { return digest_; }

    /// Agent A sees (system = prompt_a, user = question); Agent B sees
    /// (system = prompt_b, user = question + delimiter + A's output).
    virtual PipelineTranscript run_pipeline(const std::string& prompt_a,
                                            const std::string& prompt_b, const Question& q) = 0;

    /// Single-agent call: (system = prompt, user = question). The transcript's
    /// agent A fields stay empty.
    virtual PipelineTranscript run_single(const std::string& prompt, const Question& q) = 0;

    /// Scores a transcript's final output against a rubric. Re-asks up to
    /// twice when the reply has no parseable SCORE line, then throws
    /// UnparseableJudgmentError.
    virtual JudgeScore judge_score(const PipelineTranscript& transcript,
                                   const std::string& rubric) = 0;

  protected:
    ExecutorConfig cfg_;
    std::string digest_;
};

/// Deterministic, offline score model:
///   base + question effect + per-prompt effects + pair interaction
///   + marker bonus + noise, clamped to [0, 100],
/// every term derived from content hashes and the mock seed, so identical
/// inputs always score identically (retries are free of side effects).
double mock_score(const std::string& prompt_a, const std::string& prompt_b,
                  const std::string& question_id, const ExecutorConfig& cfg);

std::unique_ptr<Executor> make_executor(const ExecutorConfig& cfg);

/// HTTP transport seam: POST(url, bearer_token, body_json, timeout_seconds)
/// -> (status, body). Tests substitute a fake; production uses httplib.
struct HttpResponse {
    int status = 0;
    std::string body;
};
using HttpTransport =
    std::function<HttpResponse(const std::string& url, const std::string& bearer_token,
                               const std::string& body, double timeout_seconds)>;

/// HTTP backend with an injectable transport (nullptr = real httplib client).
std::unique_ptr<Executor> make_http_executor(const ExecutorConfig& cfg,
                                             HttpTransport transport = nullptr);

}  // namespace promptgrid
