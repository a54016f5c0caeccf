#pragma once

#include <string>

namespace promptgrid {

/// Regularized incomplete beta function I_x(a, b).
///
/// Continued-fraction (modified Lentz) evaluation with the symmetry switch at
/// x = (a+1)/(a+b+2); absolute accuracy better than 1e-12 across the degrees
/// of freedom this toolkit uses (up to a few thousand).
double regularized_incomplete_beta(double x, double a, double b);

/// Upper-tail probability P(F_{d1,d2} > f) of the F distribution.
/// Throws InvalidDfError for d1 < 1 or d2 < 1, Error for f < 0.
double f_pvalue(double f, double d1, double d2);

/// Exact two-sided binomial test against p0 = 1/2:
/// min(1, 2 * min(P(X <= k), P(X >= k))) for X ~ Binomial(n, 1/2).
///
/// Evaluated as 2 * P(X <= min(k, n-k)), which makes the k <-> n-k symmetry
/// and the center case (p = 1 exactly) hold bit-for-bit.
double binomial_two_sided_p(long long k, long long n);

/// Significance label: "***" p<0.001, "**" p<0.01, "*" p<0.05, "" otherwise.
/// Thresholds are strict inequalities.
std::string significance_stars(double p);

}  // namespace promptgrid
