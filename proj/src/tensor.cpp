#include "promptgrid/tensor.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "promptgrid/rng.hpp"

namespace promptgrid {

using nlohmann::json;

ScoreTensor ScoreTensor::constant(Eigen::Index ka, Eigen::Index kb, Eigen::Index n, double value) {
    ScoreTensor t;
    t.slices.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Constant(ka, kb, value));
    return t;
}

void ScoreTensor::validate() const {
    if (slices.empty()) throw DegenerateDimsError("tensor has no question slices");
    const Eigen::Index rows = slices.front().rows();
    const Eigen::Index cols = slices.front().cols();
    if (rows < 2 || cols < 2) {
        throw DegenerateDimsError("tensor requires k_a >= 2 and k_b >= 2, got " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    }
    for (const auto& slice : slices) {
        if (slice.rows() != rows || slice.cols() != cols) {
            throw DegenerateDimsError("ragged tensor slices");
        }
        if (!slice.allFinite()) throw NonFiniteScoreError("tensor contains non-finite scores");
    }
}

ScoreTensor build_tensor(const std::vector<ScoreRecord>& records, Dims dims) {
    if (dims.ka < 2 || dims.kb < 2 || dims.n < 1) {
        throw DegenerateDimsError("build_tensor requires k_a >= 2, k_b >= 2, n >= 1");
    }
    const std::size_t total =
        std::size_t(dims.ka) * std::size_t(dims.kb) * std::size_t(dims.n);

    ScoreTensor t;
    t.slices.assign(std::size_t(dims.n), Eigen::MatrixXd::Zero(dims.ka, dims.kb));
    std::vector<bool> seen(total, false);

    for (const auto& rec : records) {
        if (rec.a < 0 || rec.a >= dims.ka || rec.b < 0 || rec.b >= dims.kb || rec.q < 0 ||
            rec.q >= dims.n) {
            std::ostringstream msg;
            msg << "record (" << rec.a << "," << rec.b << "," << rec.q
                << ") out of range for dims (" << dims.ka << "," << dims.kb << "," << dims.n << ")";
            throw Error(msg.str());
        }
        if (!std::isfinite(rec.score)) {
            std::ostringstream msg;
            msg << "non-finite score at (" << rec.a << "," << rec.b << "," << rec.q << ")";
            throw NonFiniteScoreError(msg.str());
        }
        const std::size_t flat =
            (std::size_t(rec.q) * std::size_t(dims.ka) + std::size_t(rec.a)) * std::size_t(dims.kb) +
            std::size_t(rec.b);
        if (seen[flat]) {
            std::ostringstream msg;
            msg << "duplicate cell (" << rec.a << "," << rec.b << "," << rec.q << ")";
            throw DuplicateCellError(msg.str());
        }
        seen[flat] = true;
        t.slices[std::size_t(rec.q)](rec.a, rec.b) = rec.score;
    }

    if (records.size() != total) {
        std::ostringstream msg;
        msg << "incomplete grid: " << records.size() << " of " << total << " cells; missing";
        int listed = 0;
        for (int q = 0; q < dims.n && listed < 8; ++q) {
            for (int a = 0; a < dims.ka && listed < 8; ++a) {
                for (int b = 0; b < dims.kb && listed < 8; ++b) {
                    const std::size_t flat =
                        (std::size_t(q) * std::size_t(dims.ka) + std::size_t(a)) *
                            std::size_t(dims.kb) +
                        std::size_t(b);
                    if (!seen[flat]) {
                        msg << " (" << a << "," << b << "," << q << ")";
                        ++listed;
                    }
                }
            }
        }
        if (std::size_t(listed) < total - records.size()) msg << " ...";
        throw MissingCellError(msg.str());
    }
    return t;
}

namespace {

template <typename Tensor>
std::vector<Eigen::MatrixXd> center_slices(const Tensor& t) {
    std::vector<Eigen::MatrixXd> centered;
    centered.reserve(t.slices.size());
    for (const auto& slice : t.slices) {
        centered.push_back(slice.array() - slice.mean());
    }
    return centered;
}

template <typename Tensor>
Eigen::MatrixXd mean_over_questions(const Tensor& t) {
    if (t.slices.empty()) throw DegenerateDimsError("cell_means on empty tensor");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(t.ka(), t.kb());
    for (const auto& slice : t.slices) acc += slice;
    return acc / static_cast<double>(t.n());
}

}  // namespace

CenteredTensor question_center(const ScoreTensor& t) { return CenteredTensor{center_slices(t)}; }
CenteredTensor question_center(const CenteredTensor& t) { return CenteredTensor{center_slices(t)}; }

CellMeanMatrix cell_means(const ScoreTensor& t) { return mean_over_questions(t); }
CellMeanMatrix cell_means(const CenteredTensor& t) { return mean_over_questions(t); }

void SyntheticSpec::validate() const {
    if (ka < 2 || kb < 2 || n < 2) {
        throw DegenerateDimsError("synthetic spec requires k_a, k_b >= 2 and n >= 2");
    }
    const double sds[] = {question_sd, a_sd, b_sd, interaction_sd, noise_sd};
    for (double sd : sds) {
        if (!(sd >= 0.0) || !std::isfinite(sd)) throw Error("synthetic sds must be finite and >= 0");
    }
    if (!std::isfinite(base)) throw Error("synthetic base must be finite");
}

SyntheticTensor synth_tensor(const SyntheticSpec& spec) {
    spec.validate();

    enum Stream : std::uint64_t { kQuestions = 0, kAEffects = 1, kBEffects = 2, kInteraction = 3, kNoise = 4 };

    SyntheticComponents parts;
    parts.base = spec.base;

    Xoshiro256pp q_rng(spec.seed, kQuestions);
    parts.question_effects = Eigen::VectorXd(spec.n);
    for (int q = 0; q < spec.n; ++q) parts.question_effects(q) = q_rng.normal(0.0, spec.question_sd);

    Xoshiro256pp a_rng(spec.seed, kAEffects);
    parts.a_effects = Eigen::VectorXd(spec.ka);
    for (int i = 0; i < spec.ka; ++i) parts.a_effects(i) = a_rng.normal(0.0, spec.a_sd);

    Xoshiro256pp b_rng(spec.seed, kBEffects);
    parts.b_effects = Eigen::VectorXd(spec.kb);
    for (int j = 0; j < spec.kb; ++j) parts.b_effects(j) = b_rng.normal(0.0, spec.b_sd);

    Xoshiro256pp g_rng(spec.seed, kInteraction);
    parts.interaction = Eigen::MatrixXd(spec.ka, spec.kb);
    for (int i = 0; i < spec.ka; ++i) {
        for (int j = 0; j < spec.kb; ++j) parts.interaction(i, j) = g_rng.normal(0.0, spec.interaction_sd);
    }

    Xoshiro256pp noise_rng(spec.seed, kNoise);
    ScoreTensor t;
    t.slices.reserve(std::size_t(spec.n));
    for (int q = 0; q < spec.n; ++q) {
        Eigen::MatrixXd slice(spec.ka, spec.kb);
        for (int i = 0; i < spec.ka; ++i) {
            for (int j = 0; j < spec.kb; ++j) {
                slice(i, j) = spec.base + parts.question_effects(q) + parts.a_effects(i) +
                              parts.b_effects(j) + parts.interaction(i, j) +
                              noise_rng.normal(0.0, spec.noise_sd);
            }
        }
        t.slices.push_back(std::move(slice));
    }
    return SyntheticTensor{std::move(t), std::move(parts)};
}

void write_tensor_jsonl(const std::filesystem::path& path, const ScoreTensor& t) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (Eigen::Index q = 0; q < t.n(); ++q) {
        for (Eigen::Index a = 0; a < t.ka(); ++a) {
            for (Eigen::Index b = 0; b < t.kb(); ++b) {
                json rec{{"a", a}, {"b", b}, {"q", q}, {"score", t(a, b, q)}};
                out << rec.dump() << "\n";
            }
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ScoreRecord> read_score_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<ScoreRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(ScoreRecord{rec.at("a").get<int>(), rec.at("b").get<int>(),
                                      rec.at("q").get<int>(), rec.at("score").get<double>()});
    }
    return records;
}

ScoreTensor load_tensor(const std::filesystem::path& path) {
    const auto records = read_score_records(path);
    Dims dims;
    for (const auto& rec : records) {
        dims.ka = std::max(dims.ka, rec.a + 1);
        dims.kb = std::max(dims.kb, rec.b + 1);
        dims.n = std::max(dims.n, rec.q + 1);
    }
    return build_tensor(records, dims);
}

ScoreTensor load_tensor(const std::filesystem::path& path, Dims dims) {
    return build_tensor(read_score_records(path), dims);
}

}  // namespace promptgrid
