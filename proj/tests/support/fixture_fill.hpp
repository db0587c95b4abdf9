#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "survmamba/autograd.hpp"
#include "survmamba/survstats.hpp"
#include "survmamba/tensor.hpp"

// Deterministic parameter values mirrored by tests/oracle/derive_fixtures.py,
// so frozen oracle outputs do not depend on any RNG implementation.
namespace testsupport {

inline unsigned name_salt(std::string_view name) {
    unsigned s = 0;
    for (char c : name) s = (s * 31 + static_cast<unsigned char>(c)) % 9973;
    return s;
}

inline void fill_fixture(survmamba::Parameter& p) {
    const double phase = 0.01 * name_salt(p.name);
    const bool gamma = p.name.ends_with(".gamma");
    auto data = p.value.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double s = std::sin(0.37 * static_cast<double>(i + 1) + phase);
        data[i] = gamma ? 1.0 + 0.2 * s : 0.6 * s;
    }
}

inline void fill_fixture(survmamba::ParameterSet& ps) {
    for (auto& p : ps) fill_fixture(*p);
}

// [1, M, D] with entry cos(0.9 t + 0.5 k + phase).
inline survmamba::Tensor varied_tokens(std::size_t m, std::size_t d, double phase) {
    survmamba::Tensor t(survmamba::Shape{1, m, d});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < d; ++k)
            t[i * d + k] = std::cos(0.9 * static_cast<double>(i) + 0.5 * static_cast<double>(k) + phase);
    return t;
}

inline survmamba::Tensor random_tensor(survmamba::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                       double hi = 1.0) {
    survmamba::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data()) v = d(rng);
    return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// O(n^2) Harrell c-index as a plain double ratio.
inline double brute_force_cindex(std::span<const double> risks, std::span<const survmamba::SurvivalOutcome> out) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            if (!(out[i].event && out[i].time < out[j].time)) continue;
            den += 1.0;
            if (risks[i] > risks[j]) num += 1.0;
            else if (risks[i] == risks[j]) num += 0.5;
        }
    }
    return num / den;
}

}  // namespace testsupport
