#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "survmamba/autograd.hpp"
#include "survmamba/tensor.hpp"

// Selective state-space kernels.
//
// Shapes: x, delta [B, M, E]; A [E, N]; Bproj, Cproj [B, M, N];
// discretized Abar, Bbar [B, M, E, N]. Every (b, e) pair is an independent
// bank of N scalar recurrences h_t = Abar_t * h_{t-1} + Bbar_t * x_t with
// h_0 = 0, read out as y_t = sum_n Cproj_t[n] * h_t[n].

namespace survmamba {

enum class Discretization { euler, zoh };

Discretization parse_discretization(std::string_view name);
std::string_view to_string(Discretization mode);

struct DiscreteParams {
    Tensor abar;
    Tensor bbar;
};

// Abar = exp(delta * A) in both modes.
// euler: Bbar = delta * Bproj; zoh: Bbar = (exp(delta * A) - 1) / A * Bproj.
DiscreteParams discretize(const Tensor& delta, const Tensor& a, const Tensor& bproj, Discretization mode);

// Sequential O(M * E * N) recurrence.
Tensor selective_scan_recurrent(const Tensor& x, const DiscreteParams& dp, const Tensor& cproj);

// Same result via a work-efficient (Blelloch) scan of the affine maps
// h -> Abar_t * h + Bbar_t * x_t.
Tensor selective_scan_parallel(const Tensor& x, const DiscreteParams& dp, const Tensor& cproj);

// Time-invariant kernel K[e, k] = sum_n C[n] * Abar[e, n]^k * Bbar[e, n],
// k = 0 .. length-1. abar, bbar: [E, N]; cproj: [N]. Returns [E, length].
Tensor lti_kernel(const Tensor& abar, const Tensor& bbar, const Tensor& cproj, std::size_t length);

// Causal per-channel convolution y[b, t, e] = sum_{k<=t} K[e, k] * x[b, t-k, e].
// kernel must have at least M taps.
Tensor lti_convolve(const Tensor& x, const Tensor& kernel);

/// One affine map h -> a * h + b.
struct ScanElement {
    double a = 1.0;
    double b = 0.0;
};

// Apply `first`, then `second`: (a1 a2, a2 b1 + b2).
inline ScanElement combine(ScanElement first, ScanElement second) {
    return {first.a * second.a, second.a * first.b + second.b};
}

// In-place inclusive scan. Pads internally to a power of two with the
// identity element; the combine tree is fixed by the length alone.
void blelloch_inclusive_scan(std::span<ScanElement> elements);

// Differentiable fused discretize + scan (recurrent evaluation, adjoint
// recurrence for the reverse pass). a must already be the negative
// continuous A (see neg_exp).
Var selective_scan(Var x, Var delta, Var a, Var bproj, Var cproj, Discretization mode);

// ---------------------------------------------------------------------------
// scan-bench

enum class ScanMode { recurrent, parallel, conv };

ScanMode parse_scan_mode(std::string_view name);
std::string_view to_string(ScanMode mode);

struct ScanBenchConfig {
    std::size_t length = 1024;
    std::size_t channels = 16;
    std::size_t state = 16;
    std::vector<ScanMode> modes{ScanMode::recurrent, ScanMode::parallel, ScanMode::conv};
    std::size_t reps = 3;
    unsigned long long seed = 1;
    // Sweep this many bytes through the caches before every repetition so
    // each length is timed from memory, not from whichever cache tier its
    // working set happens to fit. 0 disables.
    std::size_t flush_bytes = std::size_t{256} << 20;
};

struct ScanBenchTiming {
    ScanMode mode;
    double best_seconds;
    double mean_seconds;
};

struct ScanBenchResult {
    ScanBenchConfig config;
    std::vector<ScanBenchTiming> timings;
    // Largest |y_mode - y_first_mode| over all outputs and modes.
    double max_deviation = 0.0;
};

// Runs each mode on one random time-invariant instance (so the convolution
// form applies) and reports timings plus cross-mode deviation.
ScanBenchResult run_scan_bench(const ScanBenchConfig& config);

}  // namespace survmamba
