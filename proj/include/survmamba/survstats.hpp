#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace survmamba {

struct SurvivalOutcome {
    double time = 0;     // > 0
    bool event = false;  // true = death observed
};

// Harrell's c-index. Pair (i, j) is comparable iff t_i < t_j and i had an
// event; tied risks count 0.5. Throws UndefinedResultError with no pairs.
double concordance_index(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes);

struct KmCurve {
    std::vector<double> times;     // distinct event times, ascending
    std::vector<double> survival;  // S just after times[k]
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    // Step function value at t (1 before the first event time).
    double at(double t) const;
};

// Deaths at a time are counted before censorings at that time.
KmCurve kaplan_meier(std::span<const SurvivalOutcome> outcomes);

struct LogRankResult {
    double chi2 = 0;
    double p = 1;
    double observed_a = 0;
    double expected_a = 0;
    double variance = 0;
    bool degenerate = false;  // zero variance: chi2 = 0, p = 1
};

LogRankResult logrank_test(std::span<const SurvivalOutcome> group_a, std::span<const SurvivalOutcome> group_b);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);
// Upper tail of the chi-square distribution.
double chi2_sf(double x, double dof);

enum class RiskGroup { low, high };

double median(std::span<const double> values);
// high iff risk > median.
std::vector<RiskGroup> risk_stratify(std::span<const double> risks);

}  // namespace survmamba
