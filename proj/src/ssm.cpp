#include "survmamba/ssm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <random>

#include "survmamba/error.hpp"

namespace survmamba {
namespace {

struct ScanDims {
    std::size_t B, M, E, N;
};

ScanDims check_scan_inputs(const Tensor& x, const Tensor& abar, const Tensor& bbar, const Tensor& cproj) {
    if (x.rank() != 3) throw DimensionError("scan: x must be [B, M, E], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), M = x.dim(1), E = x.dim(2);
    if (cproj.rank() != 3 || cproj.dim(0) != B || cproj.dim(1) != M) {
        throw DimensionError("scan: Cproj " + shape_str(cproj.shape()) + " does not match x " + shape_str(x.shape()));
    }
    const std::size_t N = cproj.dim(2);
    const Shape expect{B, M, E, N};
    if (abar.shape() != expect || bbar.shape() != expect) {
        throw DimensionError("scan: discrete params " + shape_str(abar.shape()) + " / " + shape_str(bbar.shape()) +
                             ", expected " + shape_str(expect));
    }
    return {B, M, E, N};
}

}  // namespace

Discretization parse_discretization(std::string_view name) {
    if (name == "euler") return Discretization::euler;
    if (name == "zoh") return Discretization::zoh;
    throw ConfigError("unknown discretization mode '" + std::string(name) + "' (expected euler or zoh)");
}

std::string_view to_string(Discretization mode) { return mode == Discretization::euler ? "euler" : "zoh"; }

DiscreteParams discretize(const Tensor& delta, const Tensor& a, const Tensor& bproj, Discretization mode) {
    if (delta.rank() != 3 || a.rank() != 2 || bproj.rank() != 3 || a.dim(0) != delta.dim(2) ||
        bproj.dim(0) != delta.dim(0) || bproj.dim(1) != delta.dim(1) || bproj.dim(2) != a.dim(1)) {
        throw DimensionError("discretize: delta " + shape_str(delta.shape()) + ", A " + shape_str(a.shape()) +
                             ", Bproj " + shape_str(bproj.shape()));
    }
    const std::size_t B = delta.dim(0), M = delta.dim(1), E = delta.dim(2), N = a.dim(1);
    DiscreteParams dp{Tensor(Shape{B, M, E, N}), Tensor(Shape{B, M, E, N})};
    for (std::size_t bt = 0; bt < B * M; ++bt)
        for (std::size_t e = 0; e < E; ++e) {
            const double d = delta[bt * E + e];
            for (std::size_t n = 0; n < N; ++n) {
                const double an = a[e * N + n];
                const double bn = bproj[bt * N + n];
                const std::size_t k = (bt * E + e) * N + n;
                dp.abar[k] = std::exp(d * an);
                dp.bbar[k] = mode == Discretization::euler ? d * bn : std::expm1(d * an) / an * bn;
            }
        }
    return dp;
}

Tensor selective_scan_recurrent(const Tensor& x, const DiscreteParams& dp, const Tensor& cproj) {
    const auto [B, M, E, N] = check_scan_inputs(x, dp.abar, dp.bbar, cproj);
    Tensor y(x.shape());
    // Time outermost so abar/bbar stream contiguously; h holds all E banks.
    std::vector<double> h(E * N);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(h.begin(), h.end(), 0.0);
        for (std::size_t t = 0; t < M; ++t) {
            const double* c = cproj.data().data() + (b * M + t) * N;
            for (std::size_t e = 0; e < E; ++e) {
                const double xt = x[(b * M + t) * E + e];
                const std::size_t base = ((b * M + t) * E + e) * N;
                double* he = h.data() + e * N;
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    he[n] = dp.abar[base + n] * he[n] + dp.bbar[base + n] * xt;
                    acc += c[n] * he[n];
                }
                y[(b * M + t) * E + e] = acc;
            }
        }
    }
    return y;
}

void blelloch_inclusive_scan(std::span<ScanElement> elements) {
    const std::size_t n = elements.size();
    if (n <= 1) return;
    std::size_t padded = 1;
    while (padded < n) padded <<= 1;
    std::vector<ScanElement> tree(padded);
    std::copy(elements.begin(), elements.end(), tree.begin());

    // Up-sweep: each right node becomes the composition of its subtree.
    for (std::size_t stride = 1; stride < padded; stride <<= 1) {
        for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
            tree[i] = combine(tree[i - stride], tree[i]);
        }
    }
    // Down-sweep: exclusive prefixes, left child inherits the parent prefix.
    tree[padded - 1] = ScanElement{};
    for (std::size_t stride = padded >> 1; stride >= 1; stride >>= 1) {
        for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
            const ScanElement left = tree[i - stride];
            tree[i - stride] = tree[i];
            tree[i] = combine(tree[i], left);
        }
    }
    for (std::size_t i = 0; i < n; ++i) elements[i] = combine(tree[i], elements[i]);
}

Tensor selective_scan_parallel(const Tensor& x, const DiscreteParams& dp, const Tensor& cproj) {
    const auto [B, M, E, N] = check_scan_inputs(x, dp.abar, dp.bbar, cproj);
    Tensor y(x.shape());
    std::vector<ScanElement> seq(M);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t e = 0; e < E; ++e)
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t t = 0; t < M; ++t) {
                    const std::size_t k = ((b * M + t) * E + e) * N + n;
                    seq[t] = {dp.abar[k], dp.bbar[k] * x[(b * M + t) * E + e]};
                }
                blelloch_inclusive_scan(seq);
                // With h_0 = 0 the state is the offset of the composed map.
                for (std::size_t t = 0; t < M; ++t) y[(b * M + t) * E + e] += cproj[(b * M + t) * N + n] * seq[t].b;
            }
    return y;
}

Tensor lti_kernel(const Tensor& abar, const Tensor& bbar, const Tensor& cproj, std::size_t length) {
    if (abar.rank() != 2 || bbar.shape() != abar.shape() || cproj.shape() != Shape{abar.dim(1)}) {
        throw DimensionError("lti_kernel: Abar " + shape_str(abar.shape()) + ", Bbar " + shape_str(bbar.shape()) +
                             ", C " + shape_str(cproj.shape()));
    }
    const std::size_t E = abar.dim(0), N = abar.dim(1);
    Tensor k(Shape{E, length});
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t n = 0; n < N; ++n) {
            double term = cproj[n] * bbar[e * N + n];
            for (std::size_t t = 0; t < length; ++t) {
                k[e * length + t] += term;
                term *= abar[e * N + n];
            }
        }
    return k;
}

Tensor lti_convolve(const Tensor& x, const Tensor& kernel) {
    if (x.rank() != 3 || kernel.rank() != 2 || kernel.dim(0) != x.dim(2) || kernel.dim(1) < x.dim(1)) {
        throw DimensionError("lti_convolve: x " + shape_str(x.shape()) + ", kernel " + shape_str(kernel.shape()));
    }
    const std::size_t B = x.dim(0), M = x.dim(1), E = x.dim(2), K = kernel.dim(1);
    Tensor y(x.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t e = 0; e < E; ++e)
            for (std::size_t t = 0; t < M; ++t) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= t; ++k) acc += kernel[e * K + k] * x[(b * M + t - k) * E + e];
                y[(b * M + t) * E + e] = acc;
            }
    return y;
}

Var selective_scan(Var x, Var delta, Var a, Var bproj, Var cproj, Discretization mode) {
    const Tensor& xv = x.value();
    const Tensor& dv = delta.value();
    const Tensor& av = a.value();
    const Tensor& bv = bproj.value();
    const Tensor& cv = cproj.value();
    if (xv.rank() != 3 || dv.shape() != xv.shape() || av.rank() != 2 || av.dim(0) != xv.dim(2) ||
        bv.rank() != 3 || bv.dim(0) != xv.dim(0) || bv.dim(1) != xv.dim(1) || bv.dim(2) != av.dim(1) ||
        cv.shape() != bv.shape()) {
        throw DimensionError("selective_scan: x " + shape_str(xv.shape()) + ", delta " + shape_str(dv.shape()) +
                             ", A " + shape_str(av.shape()) + ", B " + shape_str(bv.shape()) + ", C " +
                             shape_str(cv.shape()));
    }
    const std::size_t B = xv.dim(0), M = xv.dim(1), E = xv.dim(2), N = av.dim(1);
    Tensor y(xv.shape());
    // States h_t for every step, kept for the reverse pass.
    auto states = std::make_shared<std::vector<double>>(B * M * E * N);
    std::vector<double> h(N);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t e = 0; e < E; ++e) {
            std::fill(h.begin(), h.end(), 0.0);
            for (std::size_t t = 0; t < M; ++t) {
                const std::size_t bt = b * M + t;
                const double d = dv[bt * E + e];
                const double xt = xv[bt * E + e];
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double an = av[e * N + n];
                    const double bn = bv[bt * N + n];
                    const double abar = std::exp(d * an);
                    const double bbar = mode == Discretization::euler ? d * bn : std::expm1(d * an) / an * bn;
                    h[n] = abar * h[n] + bbar * xt;
                    acc += cv[bt * N + n] * h[n];
                    (*states)[(bt * E + e) * N + n] = h[n];
                }
                y[bt * E + e] = acc;
            }
        }

    const std::size_t xi = x.id, di = delta.id, ai = a.id, bi = bproj.id, ci = cproj.id;
    return x.tape->push(std::move(y), {x, delta, a, bproj, cproj}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        const Tensor& xv = tp.value(xi);
        const Tensor& dv = tp.value(di);
        const Tensor& av = tp.value(ai);
        const Tensor& bv = tp.value(bi);
        const Tensor& cv = tp.value(ci);
        std::vector<double> gx(xv.size()), gd(dv.size()), ga(av.size()), gb(bv.size()), gc(cv.size());
        std::vector<double> gh(N);
        const auto& hs = *states;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t e = 0; e < E; ++e) {
                std::fill(gh.begin(), gh.end(), 0.0);
                for (std::size_t t = M; t-- > 0;) {
                    const std::size_t bt = b * M + t;
                    const double gy = g[bt * E + e];
                    const double d = dv[bt * E + e];
                    const double xt = xv[bt * E + e];
                    double gxt = 0.0, gdt = 0.0;
                    for (std::size_t n = 0; n < N; ++n) {
                        const double ht = hs[(bt * E + e) * N + n];
                        const double hprev = t > 0 ? hs[((bt - 1) * E + e) * N + n] : 0.0;
                        const double an = av[e * N + n];
                        const double bn = bv[bt * N + n];
                        gc[bt * N + n] += gy * ht;
                        gh[n] += gy * cv[bt * N + n];
                        const double abar = std::exp(d * an);
                        const double g_abar = gh[n] * hprev;
                        const double g_bbar = gh[n] * xt;
                        gdt += g_abar * abar * an;
                        ga[e * N + n] += g_abar * abar * d;
                        if (mode == Discretization::euler) {
                            gxt += gh[n] * d * bn;
                            gdt += g_bbar * bn;
                            gb[bt * N + n] += g_bbar * d;
                        } else {
                            const double em1 = std::expm1(d * an);
                            gxt += gh[n] * em1 / an * bn;
                            gdt += g_bbar * abar * bn;
                            ga[e * N + n] += g_bbar * bn * (d * abar * an - em1) / (an * an);
                            gb[bt * N + n] += g_bbar * em1 / an;
                        }
                        gh[n] *= abar;
                    }
                    gx[bt * E + e] += gxt;
                    gd[bt * E + e] += gdt;
                }
            }
        auto flush = [&tp](std::size_t id, const std::vector<double>& src) {
            if (!tp.needs_grad(id)) return;
            auto dst = tp.accum(id);
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
        };
        flush(xi, gx);
        flush(di, gd);
        flush(ai, ga);
        flush(bi, gb);
        flush(ci, gc);
    });
}

ScanMode parse_scan_mode(std::string_view name) {
    if (name == "recurrent") return ScanMode::recurrent;
    if (name == "parallel") return ScanMode::parallel;
    if (name == "conv") return ScanMode::conv;
    throw ConfigError("unknown scan mode '" + std::string(name) + "' (expected recurrent, parallel or conv)");
}

std::string_view to_string(ScanMode mode) {
    switch (mode) {
        case ScanMode::recurrent: return "recurrent";
        case ScanMode::parallel: return "parallel";
        case ScanMode::conv: return "conv";
    }
    return "?";
}

ScanBenchResult run_scan_bench(const ScanBenchConfig& config) {
    if (config.length < 1 || config.channels < 1 || config.state < 1 || config.reps < 1) {
        throw ConfigError("scan-bench: length, channels, state and reps must be >= 1");
    }
    if (config.modes.empty()) throw ConfigError("scan-bench: no modes selected");
    const std::size_t M = config.length, E = config.channels, N = config.state;
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> decay(0.5, 0.99), unit(-1.0, 1.0);

    Tensor abar_ti(Shape{E, N}), bbar_ti(Shape{E, N}), c_ti(Shape{N});
    for (auto& v : abar_ti.data()) v = decay(rng);
    for (auto& v : bbar_ti.data()) v = unit(rng);
    for (auto& v : c_ti.data()) v = unit(rng);
    Tensor x(Shape{1, M, E});
    for (auto& v : x.data()) v = unit(rng);

    DiscreteParams dp{Tensor(Shape{1, M, E, N}), Tensor(Shape{1, M, E, N})};
    Tensor cproj(Shape{1, M, N});
    for (std::size_t t = 0; t < M; ++t) {
        std::copy(abar_ti.data().begin(), abar_ti.data().end(), dp.abar.data().begin() + t * E * N);
        std::copy(bbar_ti.data().begin(), bbar_ti.data().end(), dp.bbar.data().begin() + t * E * N);
        std::copy(c_ti.data().begin(), c_ti.data().end(), cproj.data().begin() + t * N);
    }

    ScanBenchResult result;
    result.config = config;
    Tensor reference;
    std::vector<unsigned char> sweep(config.flush_bytes);
    volatile unsigned char sink = 0;
    for (ScanMode mode : config.modes) {
        Tensor y;
        double best = 0.0, total = 0.0;
        for (std::size_t r = 0; r < config.reps; ++r) {
            for (std::size_t i = 0; i < sweep.size(); i += 64) sweep[i] = static_cast<unsigned char>(sweep[i] + r + 1);
            if (!sweep.empty()) sink = sink + sweep[sweep.size() / 2];
            const auto start = std::chrono::steady_clock::now();
            switch (mode) {
                case ScanMode::recurrent: y = selective_scan_recurrent(x, dp, cproj); break;
                case ScanMode::parallel: y = selective_scan_parallel(x, dp, cproj); break;
                case ScanMode::conv: y = lti_convolve(x, lti_kernel(abar_ti, bbar_ti, c_ti, M)); break;
            }
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            best = r == 0 ? s : std::min(best, s);
            total += s;
        }
        result.timings.push_back({mode, best, total / static_cast<double>(config.reps)});
        if (reference.size() == 0) {
            reference = std::move(y);
        } else {
            for (std::size_t i = 0; i < y.size(); ++i)
                result.max_deviation = std::max(result.max_deviation, std::abs(y[i] - reference[i]));
        }
    }
    return result;
}

}  // namespace survmamba
