#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "promptgrid/anova.hpp"
#include "promptgrid/rng.hpp"
#include "promptgrid/stats.hpp"
#include "promptgrid/tensor.hpp"

using namespace promptgrid;

namespace {

ScoreTensor single_slice(std::initializer_list<double> values, int ka, int kb) {
    ScoreTensor t;
    Eigen::MatrixXd slice(ka, kb);
    int idx = 0;
    for (double v : values) slice(idx / kb, idx % kb) = v, ++idx;
    t.slices.push_back(slice);
    return t;
}

ScoreTensor random_tensor(int ka, int kb, int n, std::uint64_t seed, double sd = 15.0) {
    Xoshiro256pp rng(seed, 17);
    ScoreTensor t;
    for (int q = 0; q < n; ++q) {
        Eigen::MatrixXd slice(ka, kb);
        for (int i = 0; i < ka; ++i)
            for (int j = 0; j < kb; ++j) slice(i, j) = rng.normal(55.0, sd);
        t.slices.push_back(slice);
    }
    return t;
}

}  // namespace

TEST_CASE("worked single-slice decompositions") {
    SUBCASE("additive slice has zero interaction") {
        const auto table = decompose(single_slice({0, 1, 1, 2}, 2, 2));
        CHECK(table.a.ss == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(table.b.ss == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(table.axb.ss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK_FALSE(table.a.f.has_value());  // n == 1: no residual df
    }
    SUBCASE("pure interaction pattern") {
        const auto table = decompose(single_slice({0, 1, 1, 0}, 2, 2));
        CHECK(table.a.ss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(table.b.ss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(table.axb.ss == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("df structure") {
    const auto synth = synth_tensor(SyntheticSpec{});  // 10 x 10 x 30
    const auto table = decompose(synth.tensor);
    CHECK(table.question.df == 29);
    CHECK(table.a.df == 9);
    CHECK(table.b.df == 9);
    CHECK(table.axb.df == 81);
    CHECK(table.error.df == 2871);
    double df_sum = 0.0;
    for (const auto* row : table.rows()) df_sum += row->df;
    CHECK(df_sum == 10 * 10 * 30 - 1);
}

TEST_CASE("decompose matches the brute-force oracle on random tensors") {
    Xoshiro256pp dim_rng(4242, 0);
    for (int rep = 0; rep < 100; ++rep) {
        const int ka = 2 + int(dim_rng.uniform_below(3));
        const int kb = 2 + int(dim_rng.uniform_below(3));
        const int n = 2 + int(dim_rng.uniform_below(5));
        const auto t = random_tensor(ka, kb, n, 1000 + std::uint64_t(rep));
        const auto table = decompose(t);
        const auto want = oracle::brute_force_anova(t);
        CAPTURE(rep);
        CHECK(table.question.ss == doctest::Approx(want.ss_q).epsilon(1e-9));
        CHECK(table.a.ss == doctest::Approx(want.ss_a).epsilon(1e-9));
        CHECK(table.b.ss == doctest::Approx(want.ss_b).epsilon(1e-9));
        CHECK(table.axb.ss == doctest::Approx(want.ss_axb).epsilon(1e-9));
        CHECK(table.error.ss == doctest::Approx(want.ss_error).epsilon(1e-9));
        CHECK(table.ss_total == doctest::Approx(want.ss_total).epsilon(1e-9));
    }
}

TEST_CASE("shares sum to one and ss to ss_total") {
    const auto t = random_tensor(5, 4, 8, 99);
    const auto table = decompose(t);
    double share_sum = 0.0, ss_sum = 0.0;
    for (const auto* row : table.rows()) {
        CHECK(row->ss >= 0.0);
        share_sum += row->share;
        ss_sum += row->ss;
    }
    CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ss_sum == doctest::Approx(table.ss_total).epsilon(1e-6));
}

TEST_CASE("constant tensor yields all-zero shares") {
    const auto table = decompose(ScoreTensor::constant(3, 3, 4, 77.0));
    for (const auto& [source, share] : variance_shares(table)) {
        CAPTURE(source);
        CHECK(share == 0.0);
    }
    CHECK(*table.axb.p == 1.0);
}

TEST_CASE("question-only synthetic tensors put everything in Question + Error") {
    SyntheticSpec spec;
    spec.a_sd = spec.b_sd = spec.interaction_sd = 0.0;
    double q_plus_err = 0.0, a_share = 0.0, b_share = 0.0, axb_share = 0.0;
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
        spec.seed = 500 + std::uint64_t(rep);
        const auto table = decompose(synth_tensor(spec).tensor);
        q_plus_err += table.question.share + table.error.share;
        a_share += table.a.share;
        b_share += table.b.share;
        axb_share += table.axb.share;
    }
    CHECK(q_plus_err / reps == doctest::Approx(1.0).epsilon(0.02));
    CHECK(a_share / reps < 0.01);
    CHECK(b_share / reps < 0.01);
    CHECK(axb_share / reps < 0.03);
}

TEST_CASE("null calibration: interaction p is uniform") {
    // interaction_sd = 0: fraction of p < 0.05 over seeds should sit near 5%.
    SyntheticSpec spec;
    int below = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
        spec.seed = 9000 + std::uint64_t(rep);
        if (*decompose(synth_tensor(spec).tensor).axb.p < 0.05) ++below;
    }
    const double frac = double(below) / reps;
    CHECK(frac > 0.01);
    CHECK(frac < 0.10);
}

TEST_CASE("power: a planted interaction is detected") {
    SyntheticSpec spec;
    spec.a_sd = spec.b_sd = 1.0;
    spec.noise_sd = 2.0;
    spec.interaction_sd = 1.2248;  // ~20% of non-question variance
    int detected = 0;
    const int reps = 25;
    for (int rep = 0; rep < reps; ++rep) {
        spec.seed = 300 + std::uint64_t(rep);
        if (*decompose(synth_tensor(spec).tensor).axb.p < 0.01) ++detected;
    }
    CHECK(detected == reps);
}

TEST_CASE("ms_per_df_note") {
    SUBCASE("interaction SS spread over many dfs loses to a concentrated main effect") {
        // Shares 2% vs 0.6% but dfs 81 vs 9: per-df mean square favors A.
        const auto synth = synth_tensor(SyntheticSpec{});
        auto table = decompose(synth.tensor);
        table.axb.ss = 2.0;
        table.axb.ms = table.axb.ss / table.axb.df;
        table.a.ss = 0.6;
        table.a.ms = table.a.ss / table.a.df;
        const auto note = ms_per_df_note(table);
        CHECK(note.ms_a > note.ms_axb);
    }
    SUBCASE("ms equals ss/df") {
        const auto table = decompose(random_tensor(4, 3, 5, 55));
        for (const auto* row : table.rows()) {
            if (row->df > 0) CHECK(row->ms == doctest::Approx(row->ss / row->df).epsilon(1e-12));
        }
    }
}

TEST_CASE("anova table JSON round-trip") {
    const auto table = decompose(random_tensor(4, 4, 6, 8));
    const auto j = to_json(table);
    const auto back = anova_table_from_json(j);
    CHECK(back.ss_total == table.ss_total);
    CHECK(back.axb.ss == table.axb.ss);
    CHECK(back.axb.df == table.axb.df);
    REQUIRE(back.axb.p.has_value());
    CHECK(*back.axb.p == *table.axb.p);
    CHECK(back.error.share == table.error.share);
}

TEST_CASE("degenerate dims raise") {
    CHECK_THROWS_AS(decompose(ScoreTensor::constant(1, 3, 4, 1.0)), DegenerateDimsError);
    CHECK_THROWS_AS(decompose(ScoreTensor{}), DegenerateDimsError);
}
