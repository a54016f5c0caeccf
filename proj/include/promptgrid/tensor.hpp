#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "promptgrid/common.hpp"

namespace promptgrid {

/// k_a x k_b matrix of per-cell means over questions.
using CellMeanMatrix = Eigen::MatrixXd;

/// Complete score grid: one k_a x k_b matrix per question, slices[q](a, b).
/// Every cell is present and finite; k_a, k_b >= 2 and n >= 1.
struct ScoreTensor {
    std::vector<Eigen::MatrixXd> slices;

    Eigen::Index ka() const { return slices.empty() ? 0 : slices.front().rows(); }
    Eigen::Index kb() const { return slices.empty() ? 0 : slices.front().cols(); }
    Eigen::Index n() const { return static_cast<Eigen::Index>(slices.size()); }

    double operator()(Eigen::Index a, Eigen::Index b, Eigen::Index q) const {
        return slices[static_cast<std::size_t>(q)](a, b);
    }
    double& operator()(Eigen::Index a, Eigen::Index b, Eigen::Index q) {
        return slices[static_cast<std::size_t>(q)](a, b);
    }

    static ScoreTensor constant(Eigen::Index ka, Eigen::Index kb, Eigen::Index n, double value);

    /// Throws on empty/ragged slices, non-finite values, or k_a/k_b < 2.
    void validate() const;
};

/// Same layout as ScoreTensor, values are question-centered: for every q the
/// mean over (a, b) is zero.
struct CenteredTensor {
    std::vector<Eigen::MatrixXd> slices;

    Eigen::Index ka() const { return slices.empty() ? 0 : slices.front().rows(); }
    Eigen::Index kb() const { return slices.empty() ? 0 : slices.front().cols(); }
    Eigen::Index n() const { return static_cast<Eigen::Index>(slices.size()); }

    double operator()(Eigen::Index a, Eigen::Index b, Eigen::Index q) const {
        return slices[static_cast<std::size_t>(q)](a, b);
    }
};

struct ScoreRecord {
    int a = 0;
    int b = 0;
    int q = 0;
    double score = 0.0;
};

struct Dims {
    int ka = 0;
    int kb = 0;
    int n = 0;
};

/// Assembles a complete tensor from unordered records.
/// Throws MissingCellError (naming absent coordinates), DuplicateCellError,
/// NonFiniteScoreError, or Error for out-of-range coordinates.
ScoreTensor build_tensor(const std::vector<ScoreRecord>& records, Dims dims);

/// Subtracts each question's mean over (a, b).
CenteredTensor question_center(const ScoreTensor& t);
CenteredTensor question_center(const CenteredTensor& t);

/// Per-cell mean over questions.
CellMeanMatrix cell_means(const ScoreTensor& t);
CellMeanMatrix cell_means(const CenteredTensor& t);

/// Additive synthetic-tensor generator with planted effects:
///     Y(a, b, q) = base + q_eff[q] + a_eff[a] + b_eff[b] + g(a, b) + noise
/// with each component i.i.d. normal at its configured sd. Used as the
/// planted-effect oracle for the variance decomposition.
struct SyntheticSpec {
    int ka = 10;
    int kb = 10;
    int n = 30;
    double question_sd = 10.0;
    double a_sd = 1.0;
    double b_sd = 1.0;
    double interaction_sd = 0.0;
    double noise_sd = 2.0;
    double base = 60.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// The component draws behind a synthetic tensor, kept so tests can compute
/// ground-truth variance shares.
struct SyntheticComponents {
    Eigen::VectorXd question_effects;  // length n
    Eigen::VectorXd a_effects;         // length ka
    Eigen::VectorXd b_effects;         // length kb
    Eigen::MatrixXd interaction;       // ka x kb
    double base = 0.0;
};

struct SyntheticTensor {
    ScoreTensor tensor;
    SyntheticComponents components;
};

/// Streams (see Xoshiro256pp substream doc): 0 questions, 1 A effects,
/// 2 B effects, 3 interaction (row-major), 4 noise (question-major, then
/// row-major within the slice).
SyntheticTensor synth_tensor(const SyntheticSpec& spec);

/// JSONL interchange: one record per line,
/// {"a":int,"b":int,"q":int,"score":float}. Line order is irrelevant.
void write_tensor_jsonl(const std::filesystem::path& path, const ScoreTensor& t);
std::vector<ScoreRecord> read_score_records(const std::filesystem::path& path);

/// Loads a tensor from JSONL; dims inferred from the records unless given.
ScoreTensor load_tensor(const std::filesystem::path& path);
ScoreTensor load_tensor(const std::filesystem::path& path, Dims dims);

}  // namespace promptgrid
