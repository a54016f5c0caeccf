#include "promptgrid/landscape.hpp"

#include <algorithm>
#include <numeric>

#include "promptgrid/rng.hpp"

namespace promptgrid {

LandscapeStats analyze_landscape(const CellMeanMatrix& means) {
    LandscapeStats stats;
    stats.joint_opt = joint_optimum(means);
    stats.indep_opt = independent_optimum(means);
    stats.gap = means(stats.joint_opt.first, stats.joint_opt.second) -
                means(stats.indep_opt.first, stats.indep_opt.second);
    stats.residuals = interaction_residuals(means);
    stats.autocorr = neighbor_autocorrelation(stats.residuals);
    return stats;
}

namespace {

struct CellSample {
    double sum = 0.0;
    int count = 0;
    double mean() const { return sum / count; }
};

// Argmax over touched cells by sampled mean; ties to the lexicographically
// lowest cell (row-major scan order).
Eigen::Index argmax_sampled(const std::vector<CellSample>& samples) {
    Eigen::Index best = -1;
    double best_mean = 0.0;
    for (std::size_t idx = 0; idx < samples.size(); ++idx) {
        if (samples[idx].count == 0) continue;
        const double m = samples[idx].mean();
        if (best < 0 || m > best_mean) {
            best = static_cast<Eigen::Index>(idx);
            best_mean = m;
        }
    }
    return best;
}

double joint_trial(const ScoreTensor& t, const CellMeanMatrix& true_means, int budget,
                   Xoshiro256pp& rng) {
    const Eigen::Index ka = t.ka(), kb = t.kb(), n = t.n();
    const std::size_t total = std::size_t(ka * kb * n);

    // Partial Fisher-Yates: the first `budget` entries of a uniform random
    // permutation of all (cell, question) triples.
    std::vector<std::uint32_t> triples(total);
    std::iota(triples.begin(), triples.end(), 0u);
    std::vector<CellSample> samples(static_cast<std::size_t>(ka * kb));
    for (int step = 0; step < budget; ++step) {
        const std::size_t pick =
            std::size_t(step) + std::size_t(rng.uniform_below(total - std::size_t(step)));
        std::swap(triples[std::size_t(step)], triples[pick]);
        const std::uint32_t flat = triples[std::size_t(step)];
        const Eigen::Index q = flat / std::uint32_t(ka * kb);
        const Eigen::Index cell = flat % std::uint32_t(ka * kb);
        const Eigen::Index i = cell / kb;
        const Eigen::Index j = cell % kb;
        samples[std::size_t(cell)].sum += t(i, j, q);
        samples[std::size_t(cell)].count += 1;
    }
    const Eigen::Index best_cell = argmax_sampled(samples);
    return true_means(best_cell / kb, best_cell % kb);
}

double independent_trial(const ScoreTensor& t, const CellMeanMatrix& true_means, int budget,
                         Xoshiro256pp& rng) {
    const Eigen::Index ka = t.ka(), kb = t.kb(), n = t.n();
    const Eigen::Index b_ref = static_cast<Eigen::Index>(rng.uniform_below(std::uint64_t(kb)));

    // Blocked scans: a cell's v-th visit uses question v mod n, so candidates
    // compared at equal visit counts see the same questions.
    const int phase_a = budget / 2;
    std::vector<CellSample> a_samples(static_cast<std::size_t>(ka));
    for (int step = 0; step < phase_a; ++step) {
        const Eigen::Index i = step % ka;
        const Eigen::Index q = (step / ka) % n;
        a_samples[std::size_t(i)].sum += t(i, b_ref, q);
        a_samples[std::size_t(i)].count += 1;
    }
    // With budget >= 2 phase A gets at least one evaluation.
    const Eigen::Index a_star = argmax_sampled(a_samples);

    const int phase_b = budget - phase_a;
    std::vector<CellSample> b_samples(static_cast<std::size_t>(kb));
    for (int step = 0; step < phase_b; ++step) {
        const Eigen::Index j = step % kb;
        const Eigen::Index q = (step / kb) % n;
        b_samples[std::size_t(j)].sum += t(a_star, j, q);
        b_samples[std::size_t(j)].count += 1;
    }
    const Eigen::Index b_star = argmax_sampled(b_samples);
    return true_means(a_star, b_star);
}

}  // namespace

BudgetCurve budget_simulation(const ScoreTensor& t, const std::vector<int>& budgets, int trials,
                              std::uint64_t seed) {
    t.validate();
    if (trials < 1) throw Error("budget_simulation requires trials >= 1");
    if (budgets.empty()) throw Error("budget_simulation requires at least one budget");
    const long long total = static_cast<long long>(t.ka()) * t.kb() * t.n();
    for (int b : budgets) {
        if (b < 2) throw BudgetTooSmallError("budget " + std::to_string(b) + " is below 2");
        if (b > total) {
            throw Error("budget " + std::to_string(b) + " exceeds grid size " +
                        std::to_string(total));
        }
    }

    const CellMeanMatrix true_means = cell_means(t);
    BudgetCurve curve;
    curve.budgets = budgets;
    curve.trials = trials;
    curve.joint_mean.assign(budgets.size(), 0.0);
    curve.indep_mean.assign(budgets.size(), 0.0);

    std::vector<KahanSum> joint_acc(budgets.size()), indep_acc(budgets.size());
    for (int trial = 0; trial < trials; ++trial) {
        Xoshiro256pp rng(seed, static_cast<std::uint64_t>(trial));
        for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
            joint_acc[bi].add(joint_trial(t, true_means, budgets[bi], rng));
            indep_acc[bi].add(independent_trial(t, true_means, budgets[bi], rng));
        }
    }
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
        curve.joint_mean[bi] = joint_acc[bi].value() / trials;
        curve.indep_mean[bi] = indep_acc[bi].value() / trials;
    }
    return curve;
}

}  // namespace promptgrid
