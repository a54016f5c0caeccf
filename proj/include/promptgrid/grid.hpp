#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "promptgrid/executor.hpp"
#include "promptgrid/tensor.hpp"

namespace promptgrid {

struct CostCounters {
    long long calls = 0;
    long long input_tokens = 0;
    long long output_tokens = 0;
};

/// Provenance of a grid run. The identity digest covers prompts, questions,
/// executor digest and seed, so two runs over the same inputs share a store;
/// timestamps and cost counters are bookkeeping and stay out of it.
struct RunManifest {
    std::vector<std::string> prompt_a_digests;
    std::vector<std::string> prompt_b_digests;
    std::vector<std::string> question_ids;
    std::string executor_digest;
    std::uint64_t seed = 0;
    std::string created_at;
    CostCounters cost;
    long long cells_total = 0;
    long long cells_done = 0;
    std::vector<std::string> failed_cells;  // "a,b,q" entries, empty when complete

    std::string identity_digest() const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Collision-resistant key for one evaluation: SHA-256 over the content
/// digests of both prompts, the question id and the executor digest. Nothing
/// positional or temporal enters, so reordering candidate lists or resuming
/// later cannot invalidate entries.
std::string cache_key(const std::string& prompt_a, const std::string& prompt_b,
                      const std::string& question_id, const std::string& executor_digest);

/// Append-only JSONL store of completed evaluations, keyed by cache key.
/// Completed rows are never rewritten; a crash between rows loses at most the
/// in-flight cell.
class ResultStore {
  public:
    struct Row {
        std::string key;
        int a = 0, b = 0, q = 0;
        double score = 0.0;
        long long input_tokens = 0;
        long long output_tokens = 0;
        long long calls = 0;
    };

    explicit ResultStore(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return rows_.count(key) > 0; }
    const Row* find(const std::string& key) const;
    std::size_t size() const { return rows_.size(); }

    /// Appends and flushes one row. Duplicate keys are rejected.
    void append(const Row& row);

    const std::map<std::string, Row>& rows() const { return rows_; }

  private:
    std::filesystem::path path_;
    std::map<std::string, Row> rows_;
};

struct GridOptions {
    std::uint64_t seed = 0;
    int attempts_per_cell = 3;
    std::string rubric;  // judge rubric; empty uses a neutral default
    bool resume = true;
};

struct GridResult {
    ScoreTensor tensor;
    RunManifest manifest;
};

/// Exhaustively evaluates every (prompt_a, prompt_b, question) cell through
/// run_pipeline + judge_score, appending each completed cell to
/// `out_dir/results.jsonl` as it lands. Cells already present in the store
/// are not re-executed. Execution order is shuffled by seed and fanned out
/// over a worker pool bounded by the executor's max_concurrency; assembly is
/// keyed, so completion order never affects the tensor.
///
/// Cells that still fail after `attempts_per_cell` tries abort the run with
/// PartialRunError naming them: the decomposition needs a complete grid, so
/// nothing downstream accepts a partial tensor.
GridResult run_grid(const std::vector<std::string>& prompts_a,
                    const std::vector<std::string>& prompts_b,
                    const std::vector<Question>& questions, Executor& executor,
                    const std::filesystem::path& out_dir, const GridOptions& options = {});

/// Up-front price estimate: 3 calls per cell (two agents + judge).
/// Throws on non-positive dims or negative price.
double estimate_cost(Dims dims, double per_call_price);

/// Default per-call price used by cost tables (flagship-adjacent mid-tier
/// rate; an estimate, not a quote).
inline constexpr double kDefaultPerCallPrice = 80.0 / 9000.0;

}  // namespace promptgrid
