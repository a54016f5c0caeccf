#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "promptgrid/executor.hpp"

// httplib is only pulled into this translation unit.
#include <httplib.h>

namespace promptgrid {

using nlohmann::json;

namespace {

// Runtime-sized counting semaphore; std::counting_semaphore fixes its ceiling
// at compile time.
class Semaphore {
  public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            ++count_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int count_;
};

struct SemaphoreGuard {
    explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
    Semaphore& sem;
};

struct ParsedUrl {
    std::string scheme_host;  // e.g. http://127.0.0.1:8080
    std::string path;         // e.g. /v1/chat/completions
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint must be an http(s) URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

HttpResponse httplib_post(const std::string& url, const std::string& bearer_token,
                          const std::string& body, double timeout_seconds) {
    const ParsedUrl parsed = split_url(url);
    httplib::Client client(parsed.scheme_host);
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(parsed.path, headers, body, "application/json");
    if (!res) {
        if (res.error() == httplib::Error::ConnectionTimeout ||
            res.error() == httplib::Error::Read || res.error() == httplib::Error::Write) {
            throw TimeoutError("request to " + parsed.scheme_host + " timed out or was cut short");
        }
        throw TransportError("request to " + parsed.scheme_host + " failed: " +
                             httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
}

class HttpExecutor final : public Executor {
  public:
    HttpExecutor(ExecutorConfig cfg, HttpTransport transport)
        : Executor(std::move(cfg)),
          transport_(transport ? std::move(transport) : httplib_post),
          semaphore_(cfg_.max_concurrency) {}

    PipelineTranscript run_pipeline(const std::string& prompt_a, const std::string& prompt_b,
                                    const Question& q) override {
        if (prompt_a.empty() || prompt_b.empty()) {
            throw EmptyPromptError("run_pipeline requires non-empty prompts");
        }
        const auto start = std::chrono::steady_clock::now();
        PipelineTranscript t;
        t.question_id = q.id;
        t.question_input = q.input;
        t.agent_a_prompt_hash = sha256_hex(prompt_a);
        t.agent_b_prompt_hash = sha256_hex(prompt_b);

        auto [a_output, a_tokens] = complete(prompt_a, q.input);
        t.agent_a_output = std::move(a_output);
        t.agent_a_tokens = a_tokens;

        auto [b_output, b_tokens] = complete(prompt_b, compose_agent_b_input(q.input, t.agent_a_output));
        t.agent_b_output = std::move(b_output);
        t.agent_b_tokens = b_tokens;

        t.latency_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return t;
    }

    PipelineTranscript run_single(const std::string& prompt, const Question& q) override {
        if (prompt.empty()) throw EmptyPromptError("run_single requires a non-empty prompt");
        const auto start = std::chrono::steady_clock::now();
        PipelineTranscript t;
        t.question_id = q.id;
        t.question_input = q.input;
        t.agent_b_prompt_hash = sha256_hex(prompt);
        auto [output, tokens] = complete(prompt, q.input);
        t.agent_b_output = std::move(output);
        t.agent_b_tokens = tokens;
        t.latency_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return t;
    }

    JudgeScore judge_score(const PipelineTranscript& transcript, const std::string& rubric) override {
        if (transcript.agent_b_output.empty()) {
            throw EmptyCompletionError("judge_score requires a non-empty final output");
        }
        std::string user_message = "Question:\n" + transcript.question_input +
                                   "\n\nAnswer to evaluate:\n" + transcript.agent_b_output +
                                   "\n\nReply with a line of the form `SCORE: <number>` where "
                                   "<number> is between 0 and 100.";
        JudgeScore score;
        for (int attempt = 1; attempt <= 3; ++attempt) {
            auto [reply, tokens] = complete(rubric, user_message);
            score.raw_judgment = reply;
            score.parse_attempts = attempt;
            score.tokens.input_tokens += tokens.input_tokens;
            score.tokens.output_tokens += tokens.output_tokens;
            if (auto value = parse_score_line(reply)) {
                score.value = *value;
                return score;
            }
            user_message += "\n\nYour previous reply had no valid `SCORE: <number>` line in the "
                            "0-100 range. Reply again with exactly one such line.";
        }
        throw UnparseableJudgmentError("judge produced no parseable SCORE line in 3 attempts");
    }

  private:
    std::pair<std::string, TokenCounts> complete(const std::string& system_prompt,
                                                 const std::string& user_message) {
        const json request{{"model", cfg_.model_id},
                           {"messages",
                            json::array({json{{"role", "system"}, {"content", system_prompt}},
                                         json{{"role", "user"}, {"content", user_message}}})},
                           {"temperature", cfg_.temperature},
                           {"max_tokens", cfg_.max_tokens}};
        const std::string body = request.dump();

        std::string api_key;
        if (const char* env = std::getenv(cfg_.api_key_env.c_str())) api_key = env;

        double backoff = cfg_.retry_backoff_seconds;
        for (int attempt = 0;; ++attempt) {
            try {
                HttpResponse response;
                {
                    SemaphoreGuard guard(semaphore_);
                    response = transport_(cfg_.endpoint, api_key, body, cfg_.timeout_seconds);
                }
                if (response.status == 429 || response.status >= 500) {
                    throw TransportError("server returned status " +
                                         std::to_string(response.status));
                }
                if (response.status != 200) {
                    // Client errors will not improve on retry.
                    throw Error("request rejected with status " + std::to_string(response.status) +
                                ": " + response.body.substr(0, 200));
                }
                return parse_completion(response.body);
            } catch (const TransportError&) {
                if (attempt >= cfg_.max_retries) throw;
            } catch (const TimeoutError&) {
                if (attempt >= cfg_.max_retries) throw;
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
    }

    static std::pair<std::string, TokenCounts> parse_completion(const std::string& body) {
        json reply;
        try {
            reply = json::parse(body);
        } catch (const json::parse_error& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
        std::string content;
        try {
            content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw TransportError("completion response missing choices[0].message.content");
        }
        if (content.empty()) throw EmptyCompletionError("model returned an empty completion");
        TokenCounts tokens;
        if (reply.contains("usage")) {
            const auto& usage = reply["usage"];
            tokens.input_tokens = usage.value("prompt_tokens", 0);
            tokens.output_tokens = usage.value("completion_tokens", 0);
        }
        return {std::move(content), tokens};
    }

    HttpTransport transport_;
    Semaphore semaphore_;
};

}  // namespace

std::unique_ptr<Executor> make_http_executor(const ExecutorConfig& cfg, HttpTransport transport) {
    return std::make_unique<HttpExecutor>(cfg, std::move(transport));
}

}  // namespace promptgrid
