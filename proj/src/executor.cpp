#include "promptgrid/executor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "promptgrid/rng.hpp"

namespace promptgrid {

void ExecutorConfig::validate() const {
    if (backend != "mock" && backend != "http") {
        throw Error("unknown executor backend: " + backend);
    }
    if (!(timeout_seconds > 0.0)) throw Error("executor timeout must be > 0");
    if (max_retries < 0) throw Error("executor max_retries must be >= 0");
    if (max_concurrency < 1) throw Error("executor max_concurrency must be >= 1");
    if (max_tokens < 1) throw Error("executor max_tokens must be >= 1");
    const double sds[] = {mock_question_sd, mock_prompt_sd, mock_interaction_sd, mock_noise_sd};
    for (double sd : sds) {
        if (!(sd >= 0.0)) throw Error("mock sds must be >= 0");
    }
}

std::string compose_agent_b_input(const std::string& question_input,
                                  const std::string& agent_a_output) {
    std::string out = question_input;
    out += "\n\n";
    out += kUpstreamDelimiter;
    out += "\n";
    out += agent_a_output;
    return out;
}

std::optional<double> parse_score_line(const std::string& judgment) {
    std::istringstream in(judgment);
    std::string line;
    while (std::getline(in, line)) {
        auto pos = line.find("SCORE:");
        if (pos == std::string::npos) continue;
        const char* cursor = line.c_str() + pos + 6;
        while (*cursor == ' ' || *cursor == '\t') ++cursor;
        char* end = nullptr;
        const double value = std::strtod(cursor, &end);
        if (end == cursor) continue;  // no number after the tag
        if (value < 0.0 || value > 100.0 || !std::isfinite(value)) return std::nullopt;
        return value;
    }
    return std::nullopt;
}

Executor::Executor(ExecutorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    // Identity fields only: timeouts, retry policy and concurrency do not
    // change what a call returns, so they stay out of the digest.
    std::ostringstream identity;
    identity << "backend=" << cfg_.backend << ";endpoint=" << cfg_.endpoint
             << ";model=" << cfg_.model_id << ";temperature=" << cfg_.temperature
             << ";max_tokens=" << cfg_.max_tokens << ";mock_seed=" << cfg_.mock_seed
             << ";mock_base=" << cfg_.mock_base << ";mock_question_sd=" << cfg_.mock_question_sd
             << ";mock_prompt_sd=" << cfg_.mock_prompt_sd
             << ";mock_interaction_sd=" << cfg_.mock_interaction_sd
             << ";mock_noise_sd=" << cfg_.mock_noise_sd << ";mock_marker=" << cfg_.mock_marker
             << ";mock_marker_bonus=" << cfg_.mock_marker_bonus;
    digest_ = sha256_hex(identity.str());
}

namespace {

// Standard normal derived from hashed content: mix the hashes into a uniform,
// push it through the inverse CDF.
double hashed_normal(std::uint64_t h, std::uint64_t stream, std::uint64_t seed) {
    std::uint64_t mixed = mix64(h ^ mix64(stream ^ 0x517cc1b727220a95ull) ^ mix64(seed));
    const double u = (static_cast<double>(mixed >> 11) + 0.5) * 0x1.0p-53;
    return Xoshiro256pp::inverse_normal_cdf(u);
}

constexpr std::uint64_t kStreamQuestion = 11;
constexpr std::uint64_t kStreamPromptA = 12;
constexpr std::uint64_t kStreamPromptB = 13;
constexpr std::uint64_t kStreamInteraction = 14;
constexpr std::uint64_t kStreamNoise = 15;

long long approx_tokens(const std::string& text) {
    return static_cast<long long>(text.size() / 4) + 1;
}

class MockExecutor final : public Executor {
  public:
    explicit MockExecutor(ExecutorConfig cfg) : Executor(std::move(cfg)) {}

    PipelineTranscript run_pipeline(const std::string& prompt_a, const std::string& prompt_b,
                                    const Question& q) override {
        if (prompt_a.empty() || prompt_b.empty()) {
            throw EmptyPromptError("run_pipeline requires non-empty prompts");
        }
        PipelineTranscript t;
        t.question_id = q.id;
        t.question_input = q.input;
        t.agent_a_prompt_hash = sha256_hex(prompt_a);
        t.agent_b_prompt_hash = sha256_hex(prompt_b);
        t.agent_a_output = "mock analysis [" + t.agent_a_prompt_hash.substr(0, 8) + "/" + q.id + "]";
        // The final output announces whether the prompts requested the marked
        // structure; the judge keys its bonus off the output, mirroring a
        // format-sensitive rubric.
        t.agent_b_output = "mock answer [" + t.agent_b_prompt_hash.substr(0, 8) + "/" + q.id + "]";
        if (marker_hit(prompt_a) || marker_hit(prompt_b)) t.agent_b_output += " [structured]";
        t.agent_a_tokens = {approx_tokens(prompt_a) + approx_tokens(q.input),
                            approx_tokens(t.agent_a_output)};
        t.agent_b_tokens = {approx_tokens(prompt_b) + approx_tokens(q.input) +
                                approx_tokens(t.agent_a_output),
                            approx_tokens(t.agent_b_output)};
        return t;
    }

    PipelineTranscript run_single(const std::string& prompt, const Question& q) override {
        if (prompt.empty()) throw EmptyPromptError("run_single requires a non-empty prompt");
        PipelineTranscript t;
        t.question_id = q.id;
        t.question_input = q.input;
        t.agent_b_prompt_hash = sha256_hex(prompt);
        t.agent_b_output = "mock answer [" + t.agent_b_prompt_hash.substr(0, 8) + "/" + q.id + "]";
        if (marker_hit(prompt)) t.agent_b_output += " [structured]";
        t.agent_b_tokens = {approx_tokens(prompt) + approx_tokens(q.input),
                            approx_tokens(t.agent_b_output)};
        return t;
    }

    JudgeScore judge_score(const PipelineTranscript& transcript, const std::string& rubric) override {
        (void)rubric;  // the mock rubric is implicit in the score model
        if (transcript.agent_b_output.empty()) {
            throw EmptyCompletionError("judge_score requires a non-empty final output");
        }
        const double value = score_from_hashes(
            transcript.agent_a_prompt_hash, transcript.agent_b_prompt_hash, transcript.question_id,
            transcript.agent_b_output.find("[structured]") != std::string::npos);
        JudgeScore score;
        score.value = value;
        std::ostringstream raw;
        raw.precision(17);  // raw judgment must reparse to the exact value
        raw << "SCORE: " << value;
        score.raw_judgment = raw.str();
        score.parse_attempts = 1;
        score.tokens = {approx_tokens(transcript.agent_b_output), 4};
        return score;
    }

  private:
    bool marker_hit(const std::string& prompt) const {
        return !cfg_.mock_marker.empty() && prompt.find(cfg_.mock_marker) != std::string::npos;
    }

    double score_from_hashes(const std::string& hash_a, const std::string& hash_b,
                             const std::string& question_id, bool structured) const {
        const std::uint64_t ha = hash_a.empty() ? 0 : fnv1a64(hash_a);
        const std::uint64_t hb = fnv1a64(hash_b);
        const std::uint64_t hq = fnv1a64(question_id);
        double value = cfg_.mock_base;
        value += cfg_.mock_question_sd * hashed_normal(hq, kStreamQuestion, cfg_.mock_seed);
        if (!hash_a.empty()) {
            value += cfg_.mock_prompt_sd * hashed_normal(ha, kStreamPromptA, cfg_.mock_seed);
        }
        value += cfg_.mock_prompt_sd * hashed_normal(hb, kStreamPromptB, cfg_.mock_seed);
        if (cfg_.mock_interaction_sd > 0.0) {
            value += cfg_.mock_interaction_sd *
                     hashed_normal(mix64(ha) ^ hb, kStreamInteraction, cfg_.mock_seed);
        }
        if (structured) value += cfg_.mock_marker_bonus;
        value += cfg_.mock_noise_sd *
                 hashed_normal(mix64(mix64(ha) ^ hb) ^ hq, kStreamNoise, cfg_.mock_seed);
        return std::clamp(value, 0.0, 100.0);
    }
};

}  // namespace

double mock_score(const std::string& prompt_a, const std::string& prompt_b,
                  const std::string& question_id, const ExecutorConfig& cfg) {
    MockExecutor exec(cfg);
    const Question q{question_id, question_id};
    const auto transcript = exec.run_pipeline(prompt_a, prompt_b, q);
    return exec.judge_score(transcript, "").value;
}

std::unique_ptr<Executor> make_executor(const ExecutorConfig& cfg) {
    if (cfg.backend == "http") return make_http_executor(cfg);
    return std::make_unique<MockExecutor>(cfg);
}

}  // namespace promptgrid
