#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures/derived.hpp"
#include "support/fixture_fill.hpp"
#include "survmamba/error.hpp"
#include "survmamba/survstats.hpp"

using namespace survmamba;

namespace {

std::vector<SurvivalOutcome> outcomes(std::vector<double> times, std::vector<int> events) {
    std::vector<SurvivalOutcome> out;
    for (std::size_t i = 0; i < times.size(); ++i) out.push_back({times[i], events[i] != 0});
    return out;
}

// Coarse grids force tied times and tied risks.
void random_instance(std::mt19937_64& rng, std::size_t n, std::vector<double>& risks, std::vector<SurvivalOutcome>& out) {
    std::uniform_int_distribution<int> t(1, static_cast<int>(std::max<std::size_t>(2, n / 3)));
    std::uniform_int_distribution<int> r(0, 20);
    std::bernoulli_distribution ev(0.6);
    risks.clear();
    out.clear();
    for (std::size_t i = 0; i < n; ++i) {
        risks.push_back(0.25 * r(rng));
        out.push_back({static_cast<double>(t(rng)), ev(rng)});
    }
    out[0] = {0.5, true};  // guarantees a comparable pair
}

}  // namespace

TEST_CASE("c-index examples") {
    const auto all = outcomes({1, 2, 3}, {1, 1, 1});
    CHECK(concordance_index(std::vector<double>{3, 2, 1}, all) == 1.0);
    CHECK(concordance_index(std::vector<double>{1, 2, 3}, all) == 0.0);
    CHECK(concordance_index(std::vector<double>{5, 3, 3}, outcomes({2, 4, 6}, {1, 1, 0})) == 2.5 / 3.0);
}

TEST_CASE("c-index errors") {
    CHECK_THROWS_AS(concordance_index(std::vector<double>{1, 2}, outcomes({1, 2}, {0, 0})), UndefinedResultError);
    CHECK_THROWS_AS(concordance_index(std::vector<double>{1, 2}, outcomes({3, 3}, {1, 1})), UndefinedResultError);
    CHECK_THROWS_AS(concordance_index(std::vector<double>{1}, outcomes({1, 2}, {1, 1})), DimensionError);
}

TEST_CASE("c-index equals brute force on random instances") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(2, 200);
    std::vector<double> risks;
    std::vector<SurvivalOutcome> out;
    for (int trial = 0; trial < 50; ++trial) {
        random_instance(rng, size(rng), risks, out);
        CHECK(concordance_index(risks, out) == testsupport::brute_force_cindex(risks, out));
    }
}

TEST_CASE("c-index monotone-transform invariance and reflection") {
    std::mt19937_64 rng(18);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 40;
        std::vector<double> risks;
        std::vector<SurvivalOutcome> out;
        for (std::size_t i = 0; i < n; ++i) {
            risks.push_back(nd(rng));
            out.push_back({std::abs(nd(rng)) + 0.1, nd(rng) > -0.3});
        }
        out[0].event = true;
        const double c = concordance_index(risks, out);
        std::vector<double> ex, aff, neg;
        for (double r : risks) {
            ex.push_back(std::exp(r));
            aff.push_back(3.0 * r + 7.0);
            neg.push_back(-r);
        }
        CHECK(concordance_index(ex, out) == c);
        CHECK(concordance_index(aff, out) == c);
        CHECK(std::abs(concordance_index(neg, out) + c - 1.0) <= 1e-12);
    }
}

TEST_CASE("kaplan-meier examples") {
    const KmCurve none = kaplan_meier(outcomes({1, 2, 3}, {0, 0, 0}));
    CHECK(none.times.empty());
    CHECK(none.at(0.5) == 1.0);
    CHECK(none.at(10.0) == 1.0);

    const KmCurve all = kaplan_meier(outcomes({1, 2, 3}, {1, 1, 1}));
    CHECK(all.times == std::vector<double>{1, 2, 3});
    CHECK(all.survival == std::vector<double>{2.0 / 3.0, 1.0 / 3.0, 0.0});
    CHECK(all.at_risk == std::vector<std::size_t>{3, 2, 1});

    const KmCurve cens = kaplan_meier(outcomes({1, 2, 3}, {1, 0, 1}));
    CHECK(cens.times == std::vector<double>{1, 3});
    CHECK(cens.survival == std::vector<double>{2.0 / 3.0, 0.0});
    CHECK(cens.at_risk == std::vector<std::size_t>{3, 1});
    CHECK(cens.at(2.5) == 2.0 / 3.0);
    CHECK(cens.at(0.5) == 1.0);

    CHECK_THROWS_AS(kaplan_meier(std::vector<SurvivalOutcome>{}), DataError);
}

TEST_CASE("deaths precede censorings at a shared time") {
    // Two subjects at t=2: one death, one censored. Both count in the risk set.
    const KmCurve km = kaplan_meier(outcomes({1, 2, 2, 5}, {1, 1, 0, 1}));
    CHECK(km.times == std::vector<double>{1, 2, 5});
    CHECK(km.at_risk == std::vector<std::size_t>{4, 3, 1});
    CHECK(std::abs(km.survival[1] - 0.75 * (2.0 / 3.0)) <= 1e-15);
}

TEST_CASE("kaplan-meier without censoring is the empirical survival function") {
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> t(1, 15);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<SurvivalOutcome> out;
        for (int i = 0; i < 60; ++i) out.push_back({static_cast<double>(t(rng)), true});
        const KmCurve km = kaplan_meier(out);
        for (double q = 0.5; q <= 16.0; q += 0.5) {
            std::size_t alive = 0;
            for (const auto& o : out) alive += o.time > q;
            CHECK(std::abs(km.at(q) - static_cast<double>(alive) / 60.0) <= 1e-12);
        }
        for (std::size_t k = 1; k < km.survival.size(); ++k) CHECK(km.survival[k] <= km.survival[k - 1]);
    }
}

TEST_CASE("log-rank examples") {
    const auto a = outcomes({1, 4, 6, 9}, {1, 0, 1, 1});
    const LogRankResult same = logrank_test(a, a);
    CHECK(same.chi2 == 0.0);
    CHECK(same.p == 1.0);

    const LogRankResult four = logrank_test(outcomes({1, 2}, {1, 1}), outcomes({10, 11}, {1, 1}));
    CHECK(four.chi2 > 1.5);
    CHECK(four.p < 0.2);
    CHECK(std::abs(four.chi2 - fixtures::logrank_4_chi2) <= 1e-12);
    CHECK(std::abs(four.p - fixtures::logrank_4_p) <= 1e-10);

    const LogRankResult eight =
        logrank_test(outcomes({1, 3, 4, 6}, {1, 0, 1, 1}), outcomes({2, 3, 5, 7}, {1, 1, 0, 1}));
    CHECK(std::abs(eight.chi2 - fixtures::logrank_8_chi2) <= 1e-12);
    CHECK(std::abs(eight.p - fixtures::logrank_8_p) <= 1e-10);

    const LogRankResult empty = logrank_test(outcomes({1, 2}, {0, 0}), outcomes({3}, {0}));
    CHECK(empty.degenerate);
    CHECK(empty.chi2 == 0.0);
    CHECK(empty.p == 1.0);
    CHECK_THROWS_AS(logrank_test(a, std::vector<SurvivalOutcome>{}), DataError);
}

TEST_CASE("log-rank is symmetric in the group labels") {
    std::mt19937_64 rng(20);
    std::uniform_int_distribution<int> t(1, 12);
    std::bernoulli_distribution ev(0.7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SurvivalOutcome> a, b;
        for (int i = 0; i < 15; ++i) a.push_back({static_cast<double>(t(rng)), ev(rng)});
        for (int i = 0; i < 11; ++i) b.push_back({static_cast<double>(t(rng)) + 1.0, ev(rng)});
        const LogRankResult ab = logrank_test(a, b), ba = logrank_test(b, a);
        CHECK(std::abs(ab.chi2 - ba.chi2) <= 1e-12 * std::max(1.0, ab.chi2));
        CHECK(std::abs(ab.p - ba.p) <= 1e-12);
        CHECK(ab.chi2 >= 0.0);
        CHECK(ab.p > 0.0);
        CHECK(ab.p <= 1.0);
    }
}

TEST_CASE("chi-square tail") {
    CHECK(std::abs(chi2_sf(3.841, 1) - 0.05) <= 1e-3);
    CHECK(std::abs(chi2_sf(3.841, 1) - fixtures::chi2_sf_3841) <= 1e-12);
    CHECK(std::abs(chi2_sf(7.0, 3) - fixtures::chi2_sf_df3_at_7) <= 1e-12);
    CHECK(chi2_sf(0.0, 1) == 1.0);
    // Q(1, x) = exp(-x) on both evaluation branches.
    for (double x : {0.1, 0.9, 1.5, 4.0, 30.0}) CHECK(std::abs(gamma_q(1.0, x) - std::exp(-x)) <= 1e-14);
    CHECK_THROWS_AS(gamma_q(0.0, 1.0), ConfigError);
}

TEST_CASE("risk stratification examples") {
    using enum RiskGroup;
    CHECK(risk_stratify(std::vector<double>{1, 2, 3, 4}) == std::vector<RiskGroup>{low, low, high, high});
    CHECK(risk_stratify(std::vector<double>{2, 2, 2}) == std::vector<RiskGroup>{low, low, low});
    CHECK(risk_stratify(std::vector<double>{5, 1, 3}) == std::vector<RiskGroup>{high, low, low});
    CHECK(median(std::vector<double>{4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(risk_stratify(std::vector<double>{1}), DataError);
}
