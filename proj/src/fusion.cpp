#include "survmamba/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "survmamba/error.hpp"
#include "survmamba/ops.hpp"

namespace survmamba {
namespace {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_bin(const Tensor& hazards, std::size_t t_bin) {
    if (hazards.rank() != 1 || hazards.size() < 1) {
        throw DimensionError("survival_nll: hazards must be 1-D, got " + shape_str(hazards.shape()));
    }
    if (t_bin >= hazards.size()) {
        throw DataError("survival_nll: bin " + std::to_string(t_bin) + " outside [0, " +
                        std::to_string(hazards.size()) + ")");
    }
}

}  // namespace

std::size_t default_align_length(std::size_t l_i, std::size_t l_g, std::size_t cap) {
    return std::min({l_i, l_g, cap});
}

std::pair<Var, Var> align_fine_tokens(Var histology, Var genomics, std::size_t length) {
    if (length < 1) throw ConfigError("align length must be >= 1");
    const auto& hv = histology.value();
    const auto& gv = genomics.value();
    if (hv.rank() != 2 || gv.rank() != 2 || hv.dim(1) != gv.dim(1)) {
        throw DimensionError("align_fine_tokens: " + shape_str(hv.shape()) + " vs " + shape_str(gv.shape()));
    }
    const Var a = hv.dim(0) == length ? histology : segment_mean(histology, length);
    const Var b = gv.dim(0) == length ? genomics : segment_mean(genomics, length);
    return {a, b};
}

Var concat_groups(const TokenGroups& groups) {
    if (groups.size() == 1) return groups.tokens.front();
    return concat_rows(groups.tokens);
}

Var fuse_fine(Tape& tape, Var histology_aligned, Var genomics_aligned, const IfmBlock& ifm) {
    const auto& s = histology_aligned.value().shape();
    if (s.size() != 2 || genomics_aligned.value().shape() != s) {
        throw DimensionError("fuse: aligned sequences differ: " + shape_str(s) + " vs " +
                             shape_str(genomics_aligned.value().shape()));
    }
    const Shape seq{1, s[0], s[1]};
    const Var fused = ifm_forward(tape, ifm, reshape(histology_aligned, seq), reshape(genomics_aligned, seq));
    return reshape(mean_tokens(fused), Shape{s[1]});
}

Var fuse_coarse(Tape& tape, Var histology_coarse, Var genomics_coarse, const IfmBlock& ifm) {
    const std::size_t len = std::min(histology_coarse.value().dim(0), genomics_coarse.value().dim(0));
    const auto [a, b] = align_fine_tokens(histology_coarse, genomics_coarse, len);
    return fuse_fine(tape, a, b, ifm);
}

namespace {

// The logistic saturates to exactly 0 or 1 in double; alpha must stay inside.
double open_alpha(double raw) {
    return std::clamp(logistic(raw), std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

}  // namespace

double AlphaParam::value() const { return open_alpha(raw->value[0]); }

Var adaptive_fuse(Tape& tape, Var fine, Var coarse, const AlphaParam& alpha) {
    if (fine.value().shape() != coarse.value().shape()) {
        throw DimensionError("adaptive_fuse: " + shape_str(fine.value().shape()) + " vs " +
                             shape_str(coarse.value().shape()));
    }
    const Var raw = tape.param(*alpha.raw);
    const double a = open_alpha(raw.value()[0]);
    const Tensor& f = fine.value();
    const Tensor& c = coarse.value();
    Tensor h(f.shape());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = a * f[i] + (1.0 - a) * c[i];
    const std::size_t fi = fine.id, ci = coarse.id, ri = raw.id;
    return tape.push(std::move(h), {fine, coarse, raw}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        if (tp.needs_grad(fi)) {
            auto gf = tp.accum(fi);
            for (std::size_t i = 0; i < g.size(); ++i) gf[i] += a * g[i];
        }
        if (tp.needs_grad(ci)) {
            auto gc = tp.accum(ci);
            for (std::size_t i = 0; i < g.size(); ++i) gc[i] += (1.0 - a) * g[i];
        }
        if (tp.needs_grad(ri)) {
            const Tensor& f = tp.value(fi);
            const Tensor& c = tp.value(ci);
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * (f[i] - c[i]);
            tp.accum(ri)[0] += s * a * (1.0 - a);
        }
    });
}

HazardOutput hazard_output(const Tensor& hazards) {
    HazardOutput out;
    out.hazards = hazards;
    out.survival = Tensor(hazards.shape());
    double s = 1.0;
    for (std::size_t t = 0; t < hazards.size(); ++t) {
        s *= 1.0 - hazards[t];
        out.survival[t] = s;
        out.risk -= s;
    }
    return out;
}

Var hazard_head(Tape& tape, Var features, const Linear& head) {
    if (features.value().rank() != 1) {
        throw DimensionError("hazard_head: expected a feature vector, got " + shape_str(features.value().shape()));
    }
    return sigmoid(apply_linear(tape, head, features));
}

double survival_nll(const Tensor& hazards, std::size_t t_bin, bool censored) {
    check_bin(hazards, t_bin);
    double s_prev = 1.0;
    for (std::size_t k = 0; k < t_bin; ++k) s_prev *= 1.0 - hazards[k];
    if (censored) return -std::log(std::max(s_prev * (1.0 - hazards[t_bin]), kProbabilityFloor));
    return -std::log(std::max(s_prev, kProbabilityFloor)) - std::log(std::max(hazards[t_bin], kProbabilityFloor));
}

double survival_nll(const HazardOutput& out, std::size_t t_bin, bool censored) {
    return survival_nll(out.hazards, t_bin, censored);
}

Var survival_nll(Var hazards, std::size_t t_bin, bool censored) {
    const Tensor& h = hazards.value();
    const double loss = survival_nll(h, t_bin, censored);
    // Survival product whose log enters the loss, and its clamp state.
    const std::size_t last = censored ? t_bin + 1 : t_bin;
    double s = 1.0;
    for (std::size_t k = 0; k < last; ++k) s *= 1.0 - h[k];
    const bool s_clamped = s < kProbabilityFloor;
    const bool h_clamped = !censored && h[t_bin] < kProbabilityFloor;
    const std::size_t hi = hazards.id;
    return hazards.tape->push(Tensor::scalar(loss), {hazards}, [=](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const Tensor& h = tp.value(hi);
        auto gh = tp.accum(hi);
        if (!s_clamped) {
            for (std::size_t k = 0; k < last; ++k) gh[k] += g / (1.0 - h[k]);
        }
        if (!censored && !h_clamped) gh[t_bin] -= g / h[t_bin];
    });
}

}  // namespace survmamba
