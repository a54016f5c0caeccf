#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "promptgrid/common.hpp"
#include "promptgrid/tensor.hpp"

namespace promptgrid {

/// Grid-landscape analysis of a cell-mean matrix: where the best prompt pair
/// sits, how much is lost by optimizing the agents independently, and whether
/// the interaction residual surface has any local structure worth following.
///
/// The matrix functions are free function templates over Eigen expressions;
/// `joint_optimum(m1 - m2)` works without materializing the difference.

using GridCell = std::pair<Eigen::Index, Eigen::Index>;

/// Argmax cell. Ties break to the lowest (a, b) lexicographically.
template <typename Derived>
GridCell joint_optimum(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() == 0 || m.cols() == 0) throw DegenerateDimsError("joint_optimum on empty matrix");
    GridCell best{0, 0};
    double best_value = m(0, 0);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (m(i, j) > best_value) {
                best_value = m(i, j);
                best = {i, j};
            }
        }
    }
    return best;
}

namespace detail {

template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

}  // namespace detail

/// (argmax of row means, argmax of column means): the cell an independent
/// per-agent search would settle on. Ties break to the lowest index.
template <typename Derived>
GridCell independent_optimum(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DegenerateDimsError("independent_optimum on empty matrix");
    }
    const Eigen::VectorXd row_means = m.rowwise().mean();
    const Eigen::VectorXd col_means = m.colwise().mean().transpose();
    return {detail::argmax_lowest(row_means), detail::argmax_lowest(col_means)};
}

/// Value at the joint optimum minus value at the independent optimum.
/// Non-negative: the joint optimum is the global maximum.
template <typename Derived>
double optimum_gap(const Eigen::MatrixBase<Derived>& m) {
    const GridCell joint = joint_optimum(m);
    const GridCell indep = independent_optimum(m);
    return m(joint.first, joint.second) - m(indep.first, indep.second);
}

/// Double-centering: r(i,j) = m(i,j) - rowmean_i - colmean_j + grandmean.
/// Removes all additive row/column structure; what remains is interaction.
template <typename Derived>
Eigen::MatrixXd interaction_residuals(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DegenerateDimsError("interaction_residuals on empty matrix");
    }
    Eigen::MatrixXd res = m.template cast<double>();
    const Eigen::VectorXd row_means = res.rowwise().mean();
    const Eigen::RowVectorXd col_means = res.colwise().mean();
    const double grand = res.mean();
    res.rowwise() -= col_means;
    res.colwise() -= row_means;
    res.array() += grand;
    return res;
}

struct NeighborAutocorrelation {
    double rho = 0.0;
    bool degenerate = false;  // residual variance below 1e-12; rho reported as 0
};

/// Pearson correlation over all horizontally and vertically adjacent cell
/// pairs, each unordered pair counted once (left/top member first).
template <typename Derived>
NeighborAutocorrelation neighbor_autocorrelation(const Eigen::MatrixBase<Derived>& r) {
    if (r.rows() < 2 || r.cols() < 2) {
        throw DegenerateDimsError("neighbor_autocorrelation requires at least a 2x2 matrix");
    }
    const Eigen::MatrixXd res = r.template cast<double>();
    const double variance = (res.array() - res.mean()).square().mean();
    if (variance < 1e-12) return {0.0, true};

    std::vector<double> xs, ys;
    xs.reserve(std::size_t(2 * res.size()));
    ys.reserve(std::size_t(2 * res.size()));
    for (Eigen::Index i = 0; i < res.rows(); ++i) {
        for (Eigen::Index j = 0; j + 1 < res.cols(); ++j) {
            xs.push_back(res(i, j));
            ys.push_back(res(i, j + 1));
        }
    }
    for (Eigen::Index i = 0; i + 1 < res.rows(); ++i) {
        for (Eigen::Index j = 0; j < res.cols(); ++j) {
            xs.push_back(res(i, j));
            ys.push_back(res(i + 1, j));
        }
    }

    const double count = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mean_x += xs[k];
        mean_y += ys[k];
    }
    mean_x /= count;
    mean_y /= count;

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double dx = xs[k] - mean_x;
        const double dy = ys[k] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
    return {sxy / std::sqrt(sxx * syy), false};
}

struct LandscapeStats {
    GridCell joint_opt{0, 0};
    GridCell indep_opt{0, 0};
    double gap = 0.0;                    // points
    NeighborAutocorrelation autocorr;
    Eigen::MatrixXd residuals;
};

/// Convenience bundle over one cell-mean matrix.
LandscapeStats analyze_landscape(const CellMeanMatrix& means);

struct BudgetCurve {
    std::vector<int> budgets;
    std::vector<double> joint_mean;  // expected best true cell mean per budget
    std::vector<double> indep_mean;
    int trials = 0;
};

/// Budget-equalized comparison of two search strategies on a known tensor.
///
/// Per trial and budget b:
///  - joint: sample b distinct (cell, question) evaluations uniformly without
///    replacement, estimate each touched cell by its sampled mean, pick the
///    argmax (ties to the lexicographically lowest cell) and score its true
///    cell mean;
///  - independent: draw a reference B prompt uniformly, spend floor(b/2)
///    evaluations scanning A prompts round-robin against it (a cell's v-th
///    visit uses question v mod n, so candidates are compared on the same
///    questions), pick the best A by sampled mean, spend the remaining budget
///    scanning B prompts round-robin with that A, pick the best B, and score
///    the true mean of the chosen pair. The reference-B draw is the trial's
///    randomness.
///
/// Trial t uses substream (seed, t), so results are independent of any
/// parallel execution order. Budgets must each be in [2, k_a*k_b*n].
BudgetCurve budget_simulation(const ScoreTensor& t, const std::vector<int>& budgets, int trials,
                              std::uint64_t seed);

}  // namespace promptgrid
