#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace promptgrid {

// Base class for all toolkit errors. Subtypes mirror the failure modes of
// each module so callers can catch selectively.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PROMPTGRID_DEFINE_ERROR(Name)                                         \
    class Name : public Error {                                               \
      public:                                                                 \
        explicit Name(const std::string& msg) : Error(msg) {}                 \
    }

PROMPTGRID_DEFINE_ERROR(MissingCellError);
PROMPTGRID_DEFINE_ERROR(DuplicateCellError);
PROMPTGRID_DEFINE_ERROR(NonFiniteScoreError);
PROMPTGRID_DEFINE_ERROR(DegenerateDimsError);
PROMPTGRID_DEFINE_ERROR(NumericalInconsistencyError);
PROMPTGRID_DEFINE_ERROR(InvalidDfError);
PROMPTGRID_DEFINE_ERROR(InvalidCountsError);
PROMPTGRID_DEFINE_ERROR(BudgetTooSmallError);
PROMPTGRID_DEFINE_ERROR(TransportError);
PROMPTGRID_DEFINE_ERROR(TimeoutError);
PROMPTGRID_DEFINE_ERROR(EmptyCompletionError);
PROMPTGRID_DEFINE_ERROR(UnparseableJudgmentError);
PROMPTGRID_DEFINE_ERROR(PartialRunError);
PROMPTGRID_DEFINE_ERROR(EmptyPromptError);
PROMPTGRID_DEFINE_ERROR(TransformerFailureError);
PROMPTGRID_DEFINE_ERROR(IoError);

#undef PROMPTGRID_DEFINE_ERROR

/// Neumaier-compensated accumulator. Sum-of-squares terms difference large
/// near-equal quantities, so plain left-to-right summation is not enough.
class KahanSum {
  public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

/// FNV-1a 64-bit. Platform-independent stand-in for std::hash where
/// deterministic cross-run behaviour is required (mock scoring, RNG streams).
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// SHA-256 hex digest; used for content-addressed prompt and cache keys.
std::string sha256_hex(std::string_view data);

/// Current UTC time as ISO-8601 (second resolution).
std::string now_iso8601();

}  // namespace promptgrid
