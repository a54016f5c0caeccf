#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "promptgrid/landscape.hpp"
#include "promptgrid/rng.hpp"

using namespace promptgrid;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed, double sd = 5.0) {
    Xoshiro256pp rng(seed, 23);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

Eigen::MatrixXd additive_matrix(int rows, int cols, std::uint64_t seed) {
    Xoshiro256pp rng(seed, 29);
    Eigen::VectorXd a(rows), b(cols);
    for (int i = 0; i < rows; ++i) a(i) = rng.normal(0.0, 3.0);
    for (int j = 0; j < cols; ++j) b(j) = rng.normal(0.0, 3.0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = a(i) + b(j);
    return m;
}

}  // namespace

TEST_CASE("joint_optimum") {
    CHECK(joint_optimum((Eigen::MatrixXd(2, 2) << 0, 1, 1, 2).finished()) == GridCell{1, 1});
    CHECK(joint_optimum(Eigen::MatrixXd::Ones(2, 2)) == GridCell{0, 0});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_matrix(10, 10, seed);
        const auto [bi, bj] = joint_optimum(m);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) CHECK(m(bi, bj) >= m(i, j));
    }
}

TEST_CASE("independent_optimum") {
    SUBCASE("equals joint optimum on additive matrices") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto m = additive_matrix(6, 7, seed);
            CHECK(independent_optimum(m) == joint_optimum(m));
        }
    }
    SUBCASE("tie-break to lowest index") {
        CHECK(independent_optimum((Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished()) ==
              GridCell{0, 0});
    }
    SUBCASE("matches a direct row/col mean scan") {
        const auto m = random_matrix(10, 10, 77);
        const auto [ai, bj] = independent_optimum(m);
        double best_row = -1e300;
        int want_i = 0;
        for (int i = 0; i < 10; ++i) {
            double s = 0.0;
            for (int j = 0; j < 10; ++j) s += m(i, j);
            if (s / 10 > best_row) best_row = s / 10, want_i = i;
        }
        double best_col = -1e300;
        int want_j = 0;
        for (int j = 0; j < 10; ++j) {
            double s = 0.0;
            for (int i = 0; i < 10; ++i) s += m(i, j);
            if (s / 10 > best_col) best_col = s / 10, want_j = j;
        }
        CHECK(ai == want_i);
        CHECK(bj == want_j);
    }
}

TEST_CASE("optimum_gap") {
    SUBCASE("zero on additive matrices, exactly") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            CHECK(optimum_gap(additive_matrix(8, 8, seed)) == 0.0);
        }
    }
    SUBCASE("hand examples") {
        CHECK(optimum_gap((Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished()) == doctest::Approx(1.0));
        Eigen::MatrixXd diag(3, 3);
        diag << 3, 0, 0, 0, 2, 0, 0, 0, 1;
        CHECK(optimum_gap(diag) == doctest::Approx(0.0));
    }
    SUBCASE("never negative") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            CHECK(optimum_gap(random_matrix(5, 9, seed)) >= 0.0);
        }
    }
}

TEST_CASE("interaction_residuals") {
    SUBCASE("additive matrices leave zero residuals") {
        const auto r = interaction_residuals(additive_matrix(7, 5, 3));
        CHECK(r.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("hand example") {
        const auto r = interaction_residuals((Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished());
        CHECK(r(0, 0) == doctest::Approx(-0.5));
        CHECK(r(0, 1) == doctest::Approx(0.5));
        CHECK(r(1, 0) == doctest::Approx(0.5));
        CHECK(r(1, 1) == doctest::Approx(-0.5));
    }
    SUBCASE("row and column sums vanish") {
        const auto r = interaction_residuals(random_matrix(6, 9, 8));
        CHECK(r.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
        CHECK(r.colwise().sum().cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("idempotent") {
        const auto r1 = interaction_residuals(random_matrix(5, 5, 13));
        const auto r2 = interaction_residuals(r1);
        CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("works on expressions") {
        const auto a = random_matrix(4, 4, 1);
        const auto b = random_matrix(4, 4, 2);
        const auto r = interaction_residuals(a - b);
        CHECK(r.rows() == 4);
    }
}

TEST_CASE("neighbor_autocorrelation") {
    SUBCASE("all-zero residuals are degenerate") {
        const auto ac = neighbor_autocorrelation(Eigen::MatrixXd::Zero(4, 4));
        CHECK(ac.degenerate);
        CHECK(ac.rho == 0.0);
    }
    SUBCASE("checkerboard gives exactly -1") {
        Eigen::MatrixXd board(10, 10);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) board(i, j) = ((i + j) % 2 == 0) ? 1.0 : -1.0;
        const auto ac = neighbor_autocorrelation(board);
        CHECK_FALSE(ac.degenerate);
        CHECK(ac.rho == -1.0);
    }
    SUBCASE("iid noise averages to zero rho") {
        double total = 0.0;
        const int reps = 200;
        for (int rep = 0; rep < reps; ++rep) {
            const auto ac = neighbor_autocorrelation(random_matrix(10, 10, 3000 + rep, 1.0));
            CHECK_FALSE(ac.degenerate);
            total += ac.rho;
        }
        CHECK(std::abs(total / reps) < 0.05);
    }
    SUBCASE("requires at least 2x2") {
        CHECK_THROWS_AS(neighbor_autocorrelation(Eigen::MatrixXd::Zero(1, 5)),
                        DegenerateDimsError);
    }
}

TEST_CASE("analyze_landscape bundles the pieces consistently") {
    const auto m = random_matrix(10, 10, 404);
    const auto stats = analyze_landscape(m);
    CHECK(stats.gap >= 0.0);
    CHECK(stats.joint_opt == joint_optimum(m));
    CHECK(stats.indep_opt == independent_optimum(m));
    CHECK(stats.residuals.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
}

namespace {

ScoreTensor fixed_demo_tensor() {
    // 3x3x2, cell means spread over ~2 points
    ScoreTensor t;
    Eigen::MatrixXd q0(3, 3), q1(3, 3);
    q0 << 70.2, 71.1, 70.6, 71.4, 71.9, 70.1, 69.8, 70.9, 71.2;
    q1 << 70.8, 71.5, 70.2, 71.0, 72.3, 70.7, 70.4, 71.3, 70.6;
    t.slices = {q0, q1};
    return t;
}

}  // namespace

TEST_CASE("budget_simulation") {
    const auto t = fixed_demo_tensor();

    SUBCASE("exhaustive joint budget always finds the true optimum") {
        const auto curve = budget_simulation(t, {18}, 50, 5);
        const auto true_means = cell_means(t);
        const auto [bi, bj] = joint_optimum(true_means);
        CHECK(curve.joint_mean[0] == doctest::Approx(true_means(bi, bj)).epsilon(1e-12));
    }

    SUBCASE("additive noise-free tensor: independent search finds the optimum") {
        ScoreTensor flat;
        Eigen::MatrixXd slice(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) slice(i, j) = 50.0 + 2.0 * i + 3.0 * j;
        flat.slices = {slice, slice};
        const auto curve = budget_simulation(flat, {6, 12}, 30, 9);
        const auto true_means = cell_means(flat);
        const auto [bi, bj] = joint_optimum(true_means);
        for (double v : curve.indep_mean) CHECK(v == doctest::Approx(true_means(bi, bj)));
    }

    SUBCASE("matches the independent Monte Carlo oracle") {
        const std::vector<int> budgets{2, 4, 6, 9, 12, 18};
        const auto curve = budget_simulation(t, budgets, 1000, 21);
        const auto want = oracle::budget_simulation_oracle(t, budgets, 1000, 1234);
        for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
            CAPTURE(budgets[bi]);
            CHECK(std::abs(curve.joint_mean[bi] - want.joint_mean[bi]) < 0.1);
            CHECK(std::abs(curve.indep_mean[bi] - want.indep_mean[bi]) < 0.1);
        }
    }

    SUBCASE("curves stay below the grid maximum and rise with budget") {
        const auto curve = budget_simulation(t, {2, 6, 12, 18}, 400, 31);
        const double grid_max = cell_means(t).maxCoeff();
        for (std::size_t bi = 0; bi < curve.budgets.size(); ++bi) {
            CHECK(curve.joint_mean[bi] <= grid_max + 1e-12);
            CHECK(curve.indep_mean[bi] <= grid_max + 1e-12);
            if (bi > 0) CHECK(curve.joint_mean[bi] >= curve.joint_mean[bi - 1] - 0.15);
        }
    }

    SUBCASE("rejects bad budgets") {
        CHECK_THROWS_AS(budget_simulation(t, {1}, 10, 0), BudgetTooSmallError);
        CHECK_THROWS_AS(budget_simulation(t, {19}, 10, 0), Error);
        CHECK_THROWS_AS(budget_simulation(t, {4}, 0, 0), Error);
    }
}

TEST_CASE("joint and independent curves converge without interaction or noise") {
    // Additive, question-varying but noise-free: both strategies approach the
    // same asymptote once the budget covers the grid.
    ScoreTensor t;
    for (int q = 0; q < 3; ++q) {
        Eigen::MatrixXd slice(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) slice(i, j) = 60.0 + 1.5 * i + 0.8 * j + 2.0 * q;
        t.slices.push_back(slice);
    }
    const auto curve = budget_simulation(t, {48}, 200, 77);
    CHECK(curve.joint_mean[0] == doctest::Approx(curve.indep_mean[0]).epsilon(1e-9));
}
