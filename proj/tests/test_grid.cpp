#include <atomic>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "promptgrid/grid.hpp"

using namespace promptgrid;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("promptgrid_grid_" + std::to_string(std::uint64_t(std::rand()) * 100003));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> prompts(const std::string& tag, int count) {
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.push_back(tag + " prompt variant " + std::to_string(i));
    return out;
}

std::vector<Question> questions(int count) {
    std::vector<Question> out;
    for (int i = 0; i < count; ++i) {
        out.push_back({"q" + std::to_string(i), "question text " + std::to_string(i)});
    }
    return out;
}

// Counts executor calls; optionally starts failing every call after a preset
// number of completed cells, standing in for a crash/outage mid-run.
class CountingExecutor final : public Executor {
  public:
    CountingExecutor(ExecutorConfig cfg, std::unique_ptr<Executor> inner)
        : Executor(std::move(cfg)), inner_(std::move(inner)) {
        digest_ = inner_->digest();
    }

    std::atomic<int> pipeline_calls{0};
    std::atomic<int> judge_calls{0};
    int fail_after = -1;  // judge calls before hard failure; -1 = never

    PipelineTranscript run_pipeline(const std::string& a, const std::string& b,
                                    const Question& q) override {
        ++pipeline_calls;
        return inner_->run_pipeline(a, b, q);
    }
    PipelineTranscript run_single(const std::string& p, const Question& q) override {
        return inner_->run_single(p, q);
    }
    JudgeScore judge_score(const PipelineTranscript& t, const std::string& rubric) override {
        if (fail_after >= 0) {
            // Ticketed so exactly fail_after calls complete even under
            // concurrent workers.
            const int ticket = judge_calls.fetch_add(1);
            if (ticket >= fail_after) {
                judge_calls.fetch_sub(1);
                throw TransportError("injected outage");
            }
            return inner_->judge_score(t, rubric);
        }
        ++judge_calls;
        return inner_->judge_score(t, rubric);
    }

  private:
    std::unique_ptr<Executor> inner_;
};

CountingExecutor counting_executor(int max_concurrency = 4) {
    ExecutorConfig cfg;
    cfg.mock_seed = 11;
    cfg.max_concurrency = max_concurrency;
    return CountingExecutor(cfg, make_executor(cfg));
}

}  // namespace

TEST_CASE("cache_key properties") {
    const auto key = cache_key("pa", "pb", "q1", "xd");
    CHECK(key == cache_key("pa", "pb", "q1", "xd"));
    CHECK(key != cache_key("pa!", "pb", "q1", "xd"));
    CHECK(key != cache_key("pa", "pb!", "q1", "xd"));
    CHECK(key != cache_key("pa", "pb", "q2", "xd"));
    CHECK(key != cache_key("pa", "pb", "q1", "xd2"));
    CHECK(key.size() == 64);
}

TEST_CASE("estimate_cost") {
    CHECK(estimate_cost({10, 10, 30}, 80.0 / 9000.0) == doctest::Approx(80.0));
    CHECK(estimate_cost({2, 2, 2}, 1.0) == doctest::Approx(24.0));
    CHECK_THROWS_AS(estimate_cost({10, 10, 0}, 1.0), Error);
    CHECK_THROWS_AS(estimate_cost({10, 10, 30}, -1.0), Error);
}

TEST_CASE("run_grid evaluates every cell exactly once") {
    TempDir dir;
    auto exec = counting_executor();
    const auto result = run_grid(prompts("A", 3), prompts("B", 4), questions(5), exec, dir.path);
    CHECK(result.tensor.ka() == 3);
    CHECK(result.tensor.kb() == 4);
    CHECK(result.tensor.n() == 5);
    CHECK(exec.pipeline_calls == 60);
    CHECK(exec.judge_calls == 60);
    CHECK(result.manifest.cells_done == 60);
    CHECK(result.manifest.cost.calls == 3 * 60);
    CHECK(fs::exists(dir.path / "results.jsonl"));
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "scores.jsonl"));

    // The persisted tensor equals the returned one.
    const auto loaded = load_tensor(dir.path / "scores.jsonl");
    for (int q = 0; q < 5; ++q) {
        CHECK((loaded.slices[std::size_t(q)] - result.tensor.slices[std::size_t(q)])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("re-running over a complete store issues zero executor calls") {
    TempDir dir;
    auto exec = counting_executor();
    const auto first = run_grid(prompts("A", 3), prompts("B", 3), questions(4), exec, dir.path);
    const int calls_after_first = exec.pipeline_calls.load();

    const auto second = run_grid(prompts("A", 3), prompts("B", 3), questions(4), exec, dir.path);
    CHECK(exec.pipeline_calls.load() == calls_after_first);
    for (int q = 0; q < 4; ++q) {
        CHECK((first.tensor.slices[std::size_t(q)] - second.tensor.slices[std::size_t(q)])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("a store missing one cell triggers exactly one evaluation") {
    TempDir dir;
    auto exec = counting_executor(1);
    run_grid(prompts("A", 3), prompts("B", 3), questions(4), exec, dir.path);

    // Rewrite the store with one row dropped.
    const auto store_path = dir.path / "results.jsonl";
    std::ifstream in(store_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    in.close();
    REQUIRE(lines.size() == 36);
    lines.pop_back();
    std::ofstream out(store_path, std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
    out.close();

    const int before = exec.pipeline_calls.load();
    run_grid(prompts("A", 3), prompts("B", 3), questions(4), exec, dir.path);
    CHECK(exec.pipeline_calls.load() == before + 1);
}

TEST_CASE("crash mid-run, then resume: tensor identical, no duplicate calls") {
    const auto reference = [&] {
        TempDir dir;
        auto exec = counting_executor();
        return run_grid(prompts("A", 5), prompts("B", 5), questions(6), exec, dir.path).tensor;
    }();

    TempDir dir;
    auto crashing = counting_executor();
    crashing.fail_after = 60;  // 40% of 150 cells
    CHECK_THROWS_AS(
        run_grid(prompts("A", 5), prompts("B", 5), questions(6), crashing, dir.path),
        PartialRunError);
    CHECK(crashing.judge_calls.load() == 60);

    auto resumed = counting_executor();
    const auto result = run_grid(prompts("A", 5), prompts("B", 5), questions(6), resumed, dir.path);
    CHECK(resumed.judge_calls.load() == 90);  // only the missing cells
    for (int q = 0; q < 6; ++q) {
        CHECK((result.tensor.slices[std::size_t(q)] - reference.slices[std::size_t(q)])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("reordering candidates keeps cache entries valid") {
    TempDir dir;
    auto exec = counting_executor();
    auto pa = prompts("A", 3);
    auto pb = prompts("B", 3);
    run_grid(pa, pb, questions(4), exec, dir.path);
    const int before = exec.pipeline_calls.load();

    std::swap(pa[0], pa[2]);
    std::swap(pb[0], pb[1]);
    // Different identity (order matters for the manifest), so a fresh out dir,
    // but the same store can be reused by key: copy it over.
    TempDir dir2;
    fs::copy_file(dir.path / "results.jsonl", dir2.path / "results.jsonl");
    const auto result = run_grid(pa, pb, questions(4), exec, dir2.path);
    CHECK(exec.pipeline_calls.load() == before);  // full cache hit by content key
    CHECK(result.tensor.ka() == 3);
}

TEST_CASE("run_grid validates inputs") {
    TempDir dir;
    auto exec = counting_executor();
    CHECK_THROWS_AS(run_grid(prompts("A", 1), prompts("B", 3), questions(4), exec, dir.path),
                    DegenerateDimsError);
    CHECK_THROWS_AS(run_grid(prompts("A", 3), prompts("B", 3), questions(1), exec, dir.path),
                    DegenerateDimsError);
    auto dup = questions(4);
    dup[3].id = dup[0].id;
    CHECK_THROWS_AS(run_grid(prompts("A", 3), prompts("B", 3), dup, exec, dir.path), Error);
}

TEST_CASE("manifest identity digest ignores timestamps and cost") {
    RunManifest m1;
    m1.prompt_a_digests = {"x", "y"};
    m1.prompt_b_digests = {"u", "v"};
    m1.question_ids = {"q0", "q1"};
    m1.executor_digest = "e";
    m1.seed = 7;
    m1.created_at = "2020-01-01T00:00:00Z";
    RunManifest m2 = m1;
    m2.created_at = "2030-12-31T23:59:59Z";
    m2.cost.calls = 999;
    CHECK(m1.identity_digest() == m2.identity_digest());
    m2.seed = 8;
    CHECK(m1.identity_digest() != m2.identity_digest());

    const auto j = m1.to_json();
    const auto back = RunManifest::from_json(j);
    CHECK(back.identity_digest() == m1.identity_digest());
}
