#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "survmamba/autograd.hpp"
#include "survmamba/ssm.hpp"

namespace survmamba {

using Rng = std::mt19937_64;

struct BlockDims {
    std::size_t d_model = 32;     // D, token width
    std::size_t d_inner = 64;     // E, expanded width
    std::size_t d_state = 16;     // N
    std::size_t conv_width = 4;   // W
};

// Affine map over the last axis; bias may be absent.
struct Linear {
    Parameter* weight = nullptr;  // [in, out]
    Parameter* bias = nullptr;    // [out]
};

struct LayerNormParams {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
    double eps = 1e-5;
};

// One direction / modality of selective SSM: causal conv, SiLU, input
// dependent B, C and delta projections, then the scan.
struct SsmBranch {
    Parameter* conv_kernel = nullptr;  // [E, W]
    Parameter* conv_bias = nullptr;    // [E]
    Linear proj_b;                     // E -> N
    Linear proj_c;                     // E -> N
    Parameter* delta_weight = nullptr; // [E, E]
    Parameter* delta_bias = nullptr;   // [E], added before softplus
    Parameter* a_log = nullptr;        // [E, N], A = -exp(a_log)
};

/// Bidirectional Mamba block. Norm, Linear^x, Linear^z and the output
/// projection are shared by both directions; everything inside SsmBranch is
/// per direction.
struct BiMambaBlock {
    BlockDims dims;
    Discretization mode = Discretization::euler;
    LayerNormParams norm;
    Linear in_x;   // D -> E
    Linear in_z;   // D -> E
    SsmBranch forward;
    SsmBranch backward;
    Linear out;    // E -> D, zero at construction
};

/// Interaction Fusion Mamba block for two equally shaped token sequences.
struct IfmBlock {
    struct Modality {
        LayerNormParams norm;
        Linear in_x;  // D -> E
        SsmBranch ssm;
    };
    BlockDims dims;
    Discretization mode = Discretization::euler;
    Modality modality[2];
    Linear in_z;  // D -> E, applied to both normalized inputs
    Linear out;   // 2E -> D, zero at construction
};

// Weights and biases uniform in +-1/sqrt(fan_in).
Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool with_bias = true);
Linear make_zero_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out);
LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, std::size_t dim);
SsmBranch make_ssm_branch(ParameterSet& params, const std::string& name, const BlockDims& dims, Rng& rng);

BiMambaBlock make_bi_mamba_block(ParameterSet& params, const std::string& name, const BlockDims& dims,
                                 Discretization mode, Rng& rng);
IfmBlock make_ifm_block(ParameterSet& params, const std::string& name, const BlockDims& dims, Discretization mode,
                        Rng& rng);

Var apply_linear(Tape& tape, const Linear& lin, Var x);
Var apply_layer_norm(Tape& tape, const LayerNormParams& norm, Var x);
// x: [B, M, E] pre-convolution input; returns the scan output [B, M, E].
Var apply_ssm_branch(Tape& tape, const SsmBranch& branch, Var x, Discretization mode);

// tokens: [B, M, D] -> [B, M, D] (residual included).
Var bi_mamba_forward(Tape& tape, const BiMambaBlock& block, Var tokens);
// a1, a2: [B, M, D] -> [B, M, D] (no residual path).
Var ifm_forward(Tape& tape, const IfmBlock& block, Var a1, Var a2);

// Closed-form parameter counts.
std::size_t linear_param_count(std::size_t in, std::size_t out, bool with_bias = true);
std::size_t ssm_branch_param_count(const BlockDims& dims);
std::size_t bi_mamba_param_count(const BlockDims& dims);
std::size_t ifm_param_count(const BlockDims& dims);

}  // namespace survmamba
