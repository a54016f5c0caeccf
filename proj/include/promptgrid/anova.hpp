#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "promptgrid/tensor.hpp"

namespace promptgrid {

/// Question-blocked two-way decomposition of a score tensor.
///
/// Model: score = grand mean + question effect + A effect + B effect +
/// A x B interaction + residual. Question blocking removes per-question
/// difficulty before the prompt terms are measured, so the A/B/AxB sums of
/// squares are computed on the question-centered tensor.

struct AnovaRow {
    std::string source;           // Question | A | B | AxB | Error
    double ss = 0.0;              // sum of squares (points^2)
    double df = 0.0;              // degrees of freedom
    double ms = 0.0;              // mean square; 0 when df == 0
    std::optional<double> f;      // only for A, B, AxB
    std::optional<double> p;      // upper-tail probability, likewise
    double share = 0.0;           // ss / ss_total, 0 when ss_total == 0
};

struct AnovaTable {
    AnovaRow question, a, b, axb, error;
    double ss_total = 0.0;
    Eigen::Index ka = 0, kb = 0, n = 0;

    std::vector<const AnovaRow*> rows() const { return {&question, &a, &b, &axb, &error}; }
};

/// Full decomposition with F statistics and p-values.
///
/// SS_Question is taken from the raw question means; SS_A, SS_B and SS_AxB
/// from the centered tensor; SS_Error closes the identity
/// SS_total = SS_Q + SS_A + SS_B + SS_AxB + SS_Error. A residual more
/// negative than rounding can explain raises NumericalInconsistencyError.
///
/// With n == 1 the error df is zero and F/p are absent (the SS decomposition
/// itself is still well defined).
AnovaTable decompose(const ScoreTensor& t);

/// (source, share) pairs in table order.
std::vector<std::pair<std::string, double>> variance_shares(const AnovaTable& table);

/// Mean squares of the three prompt terms, for report layers that explain
/// why a visible interaction share can still be non-significant: the
/// interaction spreads its SS over (k_a-1)(k_b-1) degrees of freedom.
struct MsPerDfNote {
    double ms_axb = 0.0;
    double ms_a = 0.0;
    double ms_b = 0.0;
};
MsPerDfNote ms_per_df_note(const AnovaTable& table);

nlohmann::json to_json(const AnovaTable& table);
AnovaTable anova_table_from_json(const nlohmann::json& j);

}  // namespace promptgrid
