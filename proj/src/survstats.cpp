#include "survmamba/survstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "survmamba/error.hpp"

namespace survmamba {

double concordance_index(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes) {
    if (risks.size() != outcomes.size()) {
        throw DimensionError("concordance_index: " + std::to_string(risks.size()) + " risks for " +
                             std::to_string(outcomes.size()) + " outcomes");
    }
    const std::size_t n = risks.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return outcomes[a].time < outcomes[b].time; });

    // Exact sums in halves: concordant counts 2, tie counts 1.
    std::uint64_t numer2 = 0, pairs = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t i = order[a];
        if (!outcomes[i].event) continue;
        for (std::size_t b = a + 1; b < n; ++b) {
            const std::size_t j = order[b];
            if (!(outcomes[i].time < outcomes[j].time)) continue;
            ++pairs;
            if (risks[i] > risks[j]) numer2 += 2;
            else if (risks[i] == risks[j]) numer2 += 1;
        }
    }
    if (pairs == 0) throw UndefinedResultError("concordance_index: no comparable pairs");
    return static_cast<double>(numer2) / (2.0 * static_cast<double>(pairs));
}

double KmCurve::at(double t) const {
    double s = 1.0;
    for (std::size_t k = 0; k < times.size() && times[k] <= t; ++k) s = survival[k];
    return s;
}

KmCurve kaplan_meier(std::span<const SurvivalOutcome> outcomes) {
    if (outcomes.empty()) throw DataError("kaplan_meier: no outcomes");
    std::vector<SurvivalOutcome> sorted(outcomes.begin(), outcomes.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

    KmCurve km;
    std::size_t at_risk = sorted.size();
    double s = 1.0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double t = sorted[i].time;
        std::size_t deaths = 0, leaving = 0;
        for (; i < sorted.size() && sorted[i].time == t; ++i, ++leaving) deaths += sorted[i].event ? 1 : 0;
        if (deaths > 0) {
            // (n - d) / n is one correctly rounded division; 1 - d/n rounds twice.
            s *= static_cast<double>(at_risk - deaths) / static_cast<double>(at_risk);
            km.times.push_back(t);
            km.survival.push_back(s);
            km.at_risk.push_back(at_risk);
            km.events.push_back(deaths);
        }
        at_risk -= leaving;
    }
    return km;
}

LogRankResult logrank_test(std::span<const SurvivalOutcome> group_a, std::span<const SurvivalOutcome> group_b) {
    if (group_a.empty() || group_b.empty()) throw DataError("logrank_test: both groups must be non-empty");
    struct Row {
        double time;
        bool event;
        bool in_a;
    };
    std::vector<Row> rows;
    rows.reserve(group_a.size() + group_b.size());
    for (const auto& o : group_a) rows.push_back({o.time, o.event, true});
    for (const auto& o : group_b) rows.push_back({o.time, o.event, false});
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.time < y.time; });

    LogRankResult r;
    double n_a = static_cast<double>(group_a.size());
    double n = static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size();) {
        const double t = rows[i].time;
        double d = 0, d_a = 0, leave = 0, leave_a = 0;
        for (; i < rows.size() && rows[i].time == t; ++i) {
            leave += 1;
            leave_a += rows[i].in_a ? 1 : 0;
            if (rows[i].event) {
                d += 1;
                d_a += rows[i].in_a ? 1 : 0;
            }
        }
        if (d > 0) {
            r.observed_a += d_a;
            r.expected_a += d * n_a / n;
            if (n > 1) r.variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
        }
        n -= leave;
        n_a -= leave_a;
    }
    if (!(r.variance > 0)) {
        r.degenerate = true;
        return r;
    }
    const double diff = r.observed_a - r.expected_a;
    r.chi2 = diff * diff / r.variance;
    r.p = chi2_sf(r.chi2, 1.0);
    return r;
}

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 1e-16;

// P(a, x) by its power series; valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by Lentz's continued fraction; valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0) || x < 0 || std::isnan(x)) throw ConfigError("gamma_q: need a > 0 and x >= 0");
    if (x == 0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_sf(double x, double dof) {
    if (x <= 0) return 1.0;
    return std::clamp(gamma_q(0.5 * dof, 0.5 * x), 0.0, 1.0);
}

double median(std::span<const double> values) {
    if (values.empty()) throw DataError("median of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<RiskGroup> risk_stratify(std::span<const double> risks) {
    if (risks.size() < 2) throw DataError("risk_stratify: need at least 2 subjects");
    const double m = median(risks);
    std::vector<RiskGroup> out;
    out.reserve(risks.size());
    for (double r : risks) out.push_back(r > m ? RiskGroup::high : RiskGroup::low);
    return out;
}

}  // namespace survmamba
