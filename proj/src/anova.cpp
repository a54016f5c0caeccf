#include "promptgrid/anova.hpp"

#include <cmath>
#include <limits>

#include "promptgrid/stats.hpp"

namespace promptgrid {

using nlohmann::json;

namespace {

// ss_total can be large (thousands of cells on a 0-100 scale), so the
// closure tolerance scales with it; one rounding of the final subtraction
// already costs half an ulp of ss_total.
double error_tolerance(double ss_total) { return 1e-9 * std::max(1.0, ss_total); }

void fill_f_and_p(AnovaRow& row, const AnovaRow& error) {
    if (error.df <= 0.0) return;  // n == 1: no residual dfs to test against
    if (error.ms > 0.0) {
        row.f = row.ms / error.ms;
        row.p = f_pvalue(*row.f, row.df, error.df);
    } else {
        // Degenerate: zero residual variance. Any nonzero effect is infinitely
        // significant; a zero effect is indistinguishable from noise-free null.
        if (row.ms > 0.0) {
            row.f = std::numeric_limits<double>::infinity();
            row.p = 0.0;
        } else {
            row.f = 0.0;
            row.p = 1.0;
        }
    }
}

}  // namespace

AnovaTable decompose(const ScoreTensor& t) {
    t.validate();
    const Eigen::Index ka = t.ka(), kb = t.kb(), n = t.n();
    const double cells_per_q = static_cast<double>(ka * kb);
    const double dn = static_cast<double>(n);

    // Raw grand mean and per-question means.
    Eigen::VectorXd q_means(n);
    KahanSum grand_acc;
    for (Eigen::Index q = 0; q < n; ++q) {
        q_means(q) = t.slices[std::size_t(q)].mean();
        grand_acc.add(q_means(q));
    }
    const double grand = grand_acc.value() / dn;

    KahanSum ss_q_acc;
    for (Eigen::Index q = 0; q < n; ++q) {
        const double d = q_means(q) - grand;
        ss_q_acc.add(d * d);
    }
    const double ss_q = cells_per_q * ss_q_acc.value();

    KahanSum ss_total_acc;
    for (const auto& slice : t.slices) {
        for (Eigen::Index i = 0; i < ka; ++i) {
            for (Eigen::Index j = 0; j < kb; ++j) {
                const double d = slice(i, j) - grand;
                ss_total_acc.add(d * d);
            }
        }
    }
    const double ss_total = ss_total_acc.value();

    // Centered cell means and marginals.
    const CenteredTensor centered = question_center(t);
    const CellMeanMatrix cell = cell_means(centered);
    const Eigen::VectorXd a_means = cell.rowwise().mean();
    const Eigen::VectorXd b_means = cell.colwise().mean();
    const double c_grand = cell.mean();

    KahanSum ss_a_acc;
    for (Eigen::Index i = 0; i < ka; ++i) {
        const double d = a_means(i) - c_grand;
        ss_a_acc.add(d * d);
    }
    const double ss_a = dn * static_cast<double>(kb) * ss_a_acc.value();

    KahanSum ss_b_acc;
    for (Eigen::Index j = 0; j < kb; ++j) {
        const double d = b_means(j) - c_grand;
        ss_b_acc.add(d * d);
    }
    const double ss_b = dn * static_cast<double>(ka) * ss_b_acc.value();

    KahanSum ss_axb_acc;
    for (Eigen::Index i = 0; i < ka; ++i) {
        for (Eigen::Index j = 0; j < kb; ++j) {
            const double d = cell(i, j) - a_means(i) - b_means(j) + c_grand;
            ss_axb_acc.add(d * d);
        }
    }
    const double ss_axb = dn * ss_axb_acc.value();

    double ss_error = ss_total - (ss_q + ss_a + ss_b + ss_axb);
    if (ss_error < 0.0) {
        if (ss_error < -error_tolerance(ss_total)) {
            throw NumericalInconsistencyError("negative SS_Error beyond rounding: " +
                                              std::to_string(ss_error));
        }
        ss_error = 0.0;
    }

    AnovaTable table;
    table.ka = ka;
    table.kb = kb;
    table.n = n;
    table.ss_total = ss_total;

    const double dka = static_cast<double>(ka), dkb = static_cast<double>(kb);
    table.question = {"Question", ss_q, dn - 1.0, 0.0, std::nullopt, std::nullopt, 0.0};
    table.a = {"A", ss_a, dka - 1.0, 0.0, std::nullopt, std::nullopt, 0.0};
    table.b = {"B", ss_b, dkb - 1.0, 0.0, std::nullopt, std::nullopt, 0.0};
    table.axb = {"AxB", ss_axb, (dka - 1.0) * (dkb - 1.0), 0.0, std::nullopt, std::nullopt, 0.0};
    table.error = {"Error", ss_error, (dka * dkb - 1.0) * (dn - 1.0), 0.0, std::nullopt,
                   std::nullopt, 0.0};

    for (AnovaRow* row : {&table.question, &table.a, &table.b, &table.axb, &table.error}) {
        row->ms = row->df > 0.0 ? row->ss / row->df : 0.0;
        row->share = ss_total > 0.0 ? row->ss / ss_total : 0.0;
    }
    fill_f_and_p(table.a, table.error);
    fill_f_and_p(table.b, table.error);
    fill_f_and_p(table.axb, table.error);
    return table;
}

std::vector<std::pair<std::string, double>> variance_shares(const AnovaTable& table) {
    std::vector<std::pair<std::string, double>> shares;
    for (const AnovaRow* row : table.rows()) shares.emplace_back(row->source, row->share);
    return shares;
}

MsPerDfNote ms_per_df_note(const AnovaTable& table) {
    return MsPerDfNote{table.axb.ms, table.a.ms, table.b.ms};
}

namespace {

json row_to_json(const AnovaRow& row) {
    json j{{"source", row.source}, {"ss", row.ss},       {"df", row.df},
           {"ms", row.ms},         {"share", row.share}};
    if (row.f) j["f"] = *row.f;
    if (row.p) j["p"] = *row.p;
    return j;
}

AnovaRow row_from_json(const json& j) {
    AnovaRow row;
    row.source = j.at("source").get<std::string>();
    row.ss = j.at("ss").get<double>();
    row.df = j.at("df").get<double>();
    row.ms = j.at("ms").get<double>();
    row.share = j.at("share").get<double>();
    if (j.contains("f")) row.f = j.at("f").get<double>();
    if (j.contains("p")) row.p = j.at("p").get<double>();
    return row;
}

}  // namespace

json to_json(const AnovaTable& table) {
    return json{{"ka", table.ka},
                {"kb", table.kb},
                {"n", table.n},
                {"ss_total", table.ss_total},
                {"rows",
                 json::array({row_to_json(table.question), row_to_json(table.a),
                              row_to_json(table.b), row_to_json(table.axb),
                              row_to_json(table.error)})}};
}

AnovaTable anova_table_from_json(const json& j) {
    AnovaTable table;
    table.ka = j.at("ka").get<Eigen::Index>();
    table.kb = j.at("kb").get<Eigen::Index>();
    table.n = j.at("n").get<Eigen::Index>();
    table.ss_total = j.at("ss_total").get<double>();
    const auto& rows = j.at("rows");
    table.question = row_from_json(rows.at(0));
    table.a = row_from_json(rows.at(1));
    table.b = row_from_json(rows.at(2));
    table.axb = row_from_json(rows.at(3));
    table.error = row_from_json(rows.at(4));
    return table;
}

}  // namespace promptgrid
