#include "promptgrid/stats.hpp"

#include <cmath>

#include "promptgrid/common.hpp"

namespace promptgrid {

namespace {

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Continued fraction for I_x(a,b), modified Lentz. Converges fast for
// x < (a+1)/(a+b+2); the caller applies the symmetry relation otherwise.
double beta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-13;
    constexpr int max_iter = 500;

    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;

    for (int m = 1; m <= max_iter; ++m) {
        const double dm = static_cast<double>(m);
        // even step
        double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        result *= d * c;
        // odd step
        num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::abs(delta - 1.0) < eps) return result;
    }
    throw NumericalInconsistencyError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta requires a > 0 and b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete beta requires x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(x, a, b) / a;
    }
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) *
                     beta_cf(1.0 - x, b, a) / b;
}

double f_pvalue(double f, double d1, double d2) {
    if (d1 < 1.0 || d2 < 1.0) throw InvalidDfError("f_pvalue requires d1 >= 1 and d2 >= 1");
    if (!(f >= 0.0)) throw Error("f_pvalue requires f >= 0");
    if (std::isinf(f)) return 0.0;
    // P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)
    const double x = d2 / (d2 + d1 * f);
    return regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0);
}

double binomial_two_sided_p(long long k, long long n) {
    if (n < 1 || k < 0 || k > n) throw InvalidCountsError("binomial test requires 0 <= k <= n, n >= 1");
    const long long m = std::min(k, n - k);
    const double log_half_n = static_cast<double>(n) * std::log(0.5);
    // Ascending sum of P(X = i): smallest terms first.
    KahanSum tail;
    for (long long i = 0; i <= m; ++i) {
        const double log_term = std::lgamma(double(n) + 1.0) - std::lgamma(double(i) + 1.0) -
                                std::lgamma(double(n - i) + 1.0) + log_half_n;
        tail.add(std::exp(log_term));
    }
    return std::min(1.0, 2.0 * tail.value());
}

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

}  // namespace promptgrid
