#include "promptgrid/grid.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "promptgrid/rng.hpp"

namespace promptgrid {

using nlohmann::json;

std::string RunManifest::identity_digest() const {
    std::ostringstream identity;
    identity << "A:";
    for (const auto& d : prompt_a_digests) identity << d << ",";
    identity << "|B:";
    for (const auto& d : prompt_b_digests) identity << d << ",";
    identity << "|Q:";
    for (const auto& id : question_ids) identity << id << ",";
    identity << "|X:" << executor_digest << "|seed:" << seed;
    return sha256_hex(identity.str());
}

json RunManifest::to_json() const {
    return json{{"prompt_a_digests", prompt_a_digests},
                {"prompt_b_digests", prompt_b_digests},
                {"question_ids", question_ids},
                {"executor_digest", executor_digest},
                {"seed", seed},
                {"created_at", created_at},
                {"identity_digest", identity_digest()},
                {"cells_total", cells_total},
                {"cells_done", cells_done},
                {"failed_cells", failed_cells},
                {"cost",
                 {{"calls", cost.calls},
                  {"input_tokens", cost.input_tokens},
                  {"output_tokens", cost.output_tokens}}}};
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    m.prompt_a_digests = j.at("prompt_a_digests").get<std::vector<std::string>>();
    m.prompt_b_digests = j.at("prompt_b_digests").get<std::vector<std::string>>();
    m.question_ids = j.at("question_ids").get<std::vector<std::string>>();
    m.executor_digest = j.at("executor_digest").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created_at = j.value("created_at", "");
    m.cells_total = j.value("cells_total", 0LL);
    m.cells_done = j.value("cells_done", 0LL);
    m.failed_cells = j.value("failed_cells", std::vector<std::string>{});
    if (j.contains("cost")) {
        m.cost.calls = j["cost"].value("calls", 0LL);
        m.cost.input_tokens = j["cost"].value("input_tokens", 0LL);
        m.cost.output_tokens = j["cost"].value("output_tokens", 0LL);
    }
    return m;
}

std::string cache_key(const std::string& prompt_a, const std::string& prompt_b,
                      const std::string& question_id, const std::string& executor_digest) {
    return sha256_hex("a:" + sha256_hex(prompt_a) + "\nb:" + sha256_hex(prompt_b) +
                      "\nq:" + question_id + "\nx:" + executor_digest);
}

ResultStore::ResultStore(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path_);
    if (!in) return;  // fresh store
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            // A torn final line from a crash mid-append is expected; anything
            // earlier would have been torn too, and rows are single writes.
            continue;
        }
        Row row;
        row.key = rec.at("key").get<std::string>();
        row.a = rec.at("a").get<int>();
        row.b = rec.at("b").get<int>();
        row.q = rec.at("q").get<int>();
        row.score = rec.at("score").get<double>();
        row.input_tokens = rec.value("in_tok", 0LL);
        row.output_tokens = rec.value("out_tok", 0LL);
        row.calls = rec.value("calls", 0LL);
        rows_[row.key] = row;
    }
}

const ResultStore::Row* ResultStore::find(const std::string& key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
}

void ResultStore::append(const Row& row) {
    if (rows_.count(row.key)) throw DuplicateCellError("store already has key " + row.key);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to store: " + path_.string());
    json rec{{"key", row.key}, {"a", row.a},
             {"b", row.b},     {"q", row.q},
             {"score", row.score}, {"in_tok", row.input_tokens},
             {"out_tok", row.output_tokens}, {"calls", row.calls}};
    out << rec.dump() << "\n";
    out.flush();
    if (!out) throw IoError("append failed: " + path_.string());
    rows_[row.key] = row;
}

namespace {

constexpr const char* kDefaultRubric =
    "Rate how well the answer addresses the question on a 0-100 scale, where 0 is unusable and "
    "100 is complete, correct and well-presented. Reply with a line `SCORE: <number>`.";

struct Cell {
    int a, b, q;
    std::string key;
};

}  // namespace

GridResult run_grid(const std::vector<std::string>& prompts_a,
                    const std::vector<std::string>& prompts_b,
                    const std::vector<Question>& questions, Executor& executor,
                    const std::filesystem::path& out_dir, const GridOptions& options) {
    if (prompts_a.size() < 2 || prompts_b.size() < 2) {
        throw DegenerateDimsError("run_grid requires at least 2 prompts per agent");
    }
    if (questions.size() < 2) throw DegenerateDimsError("run_grid requires at least 2 questions");
    for (const auto& p : prompts_a) {
        if (p.empty()) throw EmptyPromptError("empty prompt in agent A candidates");
    }
    for (const auto& p : prompts_b) {
        if (p.empty()) throw EmptyPromptError("empty prompt in agent B candidates");
    }
    {
        std::vector<std::string> ids;
        for (const auto& q : questions) ids.push_back(q.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw Error("duplicate question ids in run_grid input");
        }
    }

    std::filesystem::create_directories(out_dir);

    RunManifest manifest;
    for (const auto& p : prompts_a) manifest.prompt_a_digests.push_back(sha256_hex(p));
    for (const auto& p : prompts_b) manifest.prompt_b_digests.push_back(sha256_hex(p));
    for (const auto& q : questions) manifest.question_ids.push_back(q.id);
    manifest.executor_digest = executor.digest();
    manifest.seed = options.seed;
    manifest.created_at = now_iso8601();
    manifest.cells_total = static_cast<long long>(prompts_a.size()) *
                           static_cast<long long>(prompts_b.size()) *
                           static_cast<long long>(questions.size());

    const auto manifest_path = out_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json j;
        in >> j;
        const auto previous = RunManifest::from_json(j);
        if (!options.resume) {
            throw Error("output dir already holds a run and resume is off: " + out_dir.string());
        }
        if (previous.identity_digest() != manifest.identity_digest()) {
            throw Error("existing run in " + out_dir.string() +
                        " was made from different inputs; refusing to mix stores");
        }
    }

    ResultStore store(out_dir / "results.jsonl");

    // Cells missing from the store, in seed-shuffled order so transient
    // provider failures spread across the grid instead of clustering.
    std::vector<Cell> pending;
    for (int a = 0; a < int(prompts_a.size()); ++a) {
        for (int b = 0; b < int(prompts_b.size()); ++b) {
            for (int q = 0; q < int(questions.size()); ++q) {
                std::string key = cache_key(prompts_a[std::size_t(a)], prompts_b[std::size_t(b)],
                                            questions[std::size_t(q)].id, executor.digest());
                if (!store.contains(key)) pending.push_back({a, b, q, std::move(key)});
            }
        }
    }
    {
        Xoshiro256pp rng(options.seed, 0x6d61702d6f726465ull);
        for (std::size_t i = pending.size(); i > 1; --i) {
            std::swap(pending[i - 1], pending[std::size_t(rng.uniform_below(i))]);
        }
    }

    const std::string rubric = options.rubric.empty() ? kDefaultRubric : options.rubric;

    std::mutex mutex;  // guards next_cell, store, failures
    std::size_t next_cell = 0;
    std::vector<std::pair<Cell, std::string>> failures;

    auto worker = [&] {
        for (;;) {
            Cell cell;
            {
                std::lock_guard lock(mutex);
                if (next_cell >= pending.size()) return;
                cell = pending[next_cell++];
            }
            std::string last_error = "unknown";
            bool done = false;
            for (int attempt = 0; attempt < options.attempts_per_cell && !done; ++attempt) {
                try {
                    const auto transcript =
                        executor.run_pipeline(prompts_a[std::size_t(cell.a)],
                                              prompts_b[std::size_t(cell.b)],
                                              questions[std::size_t(cell.q)]);
                    const auto judged = executor.judge_score(transcript, rubric);
                    ResultStore::Row row;
                    row.key = cell.key;
                    row.a = cell.a;
                    row.b = cell.b;
                    row.q = cell.q;
                    row.score = judged.value;
                    row.calls = 3;
                    row.input_tokens = transcript.agent_a_tokens.input_tokens +
                                       transcript.agent_b_tokens.input_tokens +
                                       judged.tokens.input_tokens;
                    row.output_tokens = transcript.agent_a_tokens.output_tokens +
                                        transcript.agent_b_tokens.output_tokens +
                                        judged.tokens.output_tokens;
                    std::lock_guard lock(mutex);
                    store.append(row);
                    done = true;
                } catch (const Error& e) {
                    last_error = e.what();
                }
            }
            if (!done) {
                std::lock_guard lock(mutex);
                failures.emplace_back(cell, last_error);
            }
        }
    };

    const int thread_count = std::max(
        1, std::min<int>(executor.config().max_concurrency, int(pending.size())));
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(std::size_t(thread_count));
        for (int i = 0; i < thread_count; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (const auto& row : store.rows()) {
        manifest.cost.calls += row.second.calls;
        manifest.cost.input_tokens += row.second.input_tokens;
        manifest.cost.output_tokens += row.second.output_tokens;
    }
    manifest.cells_done = static_cast<long long>(store.size());
    std::sort(failures.begin(), failures.end(), [](const auto& x, const auto& y) {
        return std::tie(x.first.a, x.first.b, x.first.q) < std::tie(y.first.a, y.first.b, y.first.q);
    });
    for (const auto& [cell, why] : failures) {
        manifest.failed_cells.push_back(std::to_string(cell.a) + "," + std::to_string(cell.b) +
                                        "," + std::to_string(cell.q));
        (void)why;
    }

    {
        std::ofstream out(manifest_path);
        out << manifest.to_json().dump(2) << "\n";
    }

    if (!failures.empty()) {
        std::ostringstream msg;
        msg << failures.size() << " cells failed after " << options.attempts_per_cell
            << " attempts:";
        for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 5); ++i) {
            msg << " (" << failures[i].first.a << "," << failures[i].first.b << ","
                << failures[i].first.q << ": " << failures[i].second << ")";
        }
        if (failures.size() > 5) msg << " ...";
        throw PartialRunError(msg.str());
    }

    // Keyed assembly: look every cell up by its content key.
    std::vector<ScoreRecord> records;
    records.reserve(std::size_t(manifest.cells_total));
    for (int a = 0; a < int(prompts_a.size()); ++a) {
        for (int b = 0; b < int(prompts_b.size()); ++b) {
            for (int q = 0; q < int(questions.size()); ++q) {
                const std::string key =
                    cache_key(prompts_a[std::size_t(a)], prompts_b[std::size_t(b)],
                              questions[std::size_t(q)].id, executor.digest());
                const auto* row = store.find(key);
                if (row == nullptr) throw MissingCellError("store lost key for cell");
                records.push_back({a, b, q, row->score});
            }
        }
    }
    GridResult result{build_tensor(records, Dims{int(prompts_a.size()), int(prompts_b.size()),
                                                 int(questions.size())}),
                      manifest};
    write_tensor_jsonl(out_dir / "scores.jsonl", result.tensor);
    return result;
}

double estimate_cost(Dims dims, double per_call_price) {
    if (dims.ka < 1 || dims.kb < 1 || dims.n < 1) {
        throw Error("estimate_cost requires positive dims");
    }
    if (per_call_price < 0.0) throw Error("estimate_cost requires a non-negative price");
    const double calls = 3.0 * dims.ka * dims.kb * dims.n;
    return calls * per_call_price;
}

}  // namespace promptgrid
