#include "survmamba/blocks.hpp"

#include <cmath>

#include "survmamba/error.hpp"
#include "survmamba/ops.hpp"

namespace survmamba {
namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

void require_width(const char* block, Var tokens, std::size_t d) {
    const Tensor& v = tokens.value();
    if (v.rank() != 3 || v.dim(2) != d) {
        throw DimensionError(std::string(block) + ": expected [B, M, " + std::to_string(d) + "], got " +
                             shape_str(v.shape()));
    }
    if (v.dim(1) < 1) throw DimensionError(std::string(block) + ": empty sequence");
}

}  // namespace

Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear lin;
    lin.weight = &params.add(name + ".weight", uniform(Shape{in, out}, bound, rng));
    if (with_bias) lin.bias = &params.add(name + ".bias", uniform(Shape{out}, bound, rng));
    return lin;
}

Linear make_zero_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out) {
    Linear lin;
    lin.weight = &params.add(name + ".weight", Tensor(Shape{in, out}));
    lin.bias = &params.add(name + ".bias", Tensor(Shape{out}));
    return lin;
}

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, std::size_t dim) {
    LayerNormParams n;
    n.gamma = &params.add(name + ".gamma", Tensor(Shape{dim}, 1.0));
    n.beta = &params.add(name + ".beta", Tensor(Shape{dim}, 0.0));
    return n;
}

SsmBranch make_ssm_branch(ParameterSet& params, const std::string& name, const BlockDims& dims, Rng& rng) {
    const std::size_t E = dims.d_inner, N = dims.d_state, W = dims.conv_width;
    SsmBranch br;
    const double conv_bound = 1.0 / std::sqrt(static_cast<double>(W));
    br.conv_kernel = &params.add(name + ".conv.weight", uniform(Shape{E, W}, conv_bound, rng));
    br.conv_bias = &params.add(name + ".conv.bias", uniform(Shape{E}, conv_bound, rng));
    br.proj_b = make_linear(params, name + ".linear_b", E, N, rng);
    br.proj_c = make_linear(params, name + ".linear_c", E, N, rng);
    br.delta_weight = &params.add(name + ".linear_delta.weight",
                                  uniform(Shape{E, E}, 1.0 / std::sqrt(static_cast<double>(E)), rng));

    // softplus(delta_bias) log-uniform in [1e-3, 1e-1].
    Tensor dbias(Shape{E});
    std::uniform_real_distribution<double> logdt(std::log(1e-3), std::log(1e-1));
    for (double& v : dbias.data()) {
        const double dt = std::exp(logdt(rng));
        v = dt + std::log(-std::expm1(-dt));
    }
    br.delta_bias = &params.add(name + ".delta_bias", std::move(dbias));

    // -A log-spaced over [1, N] along the state axis.
    Tensor alog(Shape{E, N});
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t n = 0; n < N; ++n)
            alog[e * N + n] = N > 1 ? std::log(static_cast<double>(N)) * static_cast<double>(n) /
                                          static_cast<double>(N - 1)
                                    : 0.0;
    br.a_log = &params.add(name + ".a_log", std::move(alog));
    return br;
}

BiMambaBlock make_bi_mamba_block(ParameterSet& params, const std::string& name, const BlockDims& dims,
                                 Discretization mode, Rng& rng) {
    BiMambaBlock b;
    b.dims = dims;
    b.mode = mode;
    b.norm = make_layer_norm(params, name + ".norm", dims.d_model);
    b.in_x = make_linear(params, name + ".linear_x", dims.d_model, dims.d_inner, rng);
    b.in_z = make_linear(params, name + ".linear_z", dims.d_model, dims.d_inner, rng);
    b.forward = make_ssm_branch(params, name + ".fwd", dims, rng);
    b.backward = make_ssm_branch(params, name + ".bwd", dims, rng);
    b.out = make_zero_linear(params, name + ".linear_t", dims.d_inner, dims.d_model);
    return b;
}

IfmBlock make_ifm_block(ParameterSet& params, const std::string& name, const BlockDims& dims, Discretization mode,
                        Rng& rng) {
    IfmBlock b;
    b.dims = dims;
    b.mode = mode;
    for (int m = 0; m < 2; ++m) {
        const std::string mn = name + ".m" + std::to_string(m);
        b.modality[m].norm = make_layer_norm(params, mn + ".norm", dims.d_model);
        b.modality[m].in_x = make_linear(params, mn + ".linear_x", dims.d_model, dims.d_inner, rng);
        b.modality[m].ssm = make_ssm_branch(params, mn + ".ssm", dims, rng);
    }
    b.in_z = make_linear(params, name + ".linear_z", dims.d_model, dims.d_inner, rng);
    b.out = make_zero_linear(params, name + ".linear_t", 2 * dims.d_inner, dims.d_model);
    return b;
}

Var apply_linear(Tape& tape, const Linear& lin, Var x) {
    if (lin.bias) return linear(x, tape.param(*lin.weight), tape.param(*lin.bias));
    return linear(x, tape.param(*lin.weight));
}

Var apply_layer_norm(Tape& tape, const LayerNormParams& norm, Var x) {
    return layer_norm(x, tape.param(*norm.gamma), tape.param(*norm.beta), norm.eps);
}

Var apply_ssm_branch(Tape& tape, const SsmBranch& br, Var x, Discretization mode) {
    const Var xc = silu(causal_depthwise_conv1d(x, tape.param(*br.conv_kernel), tape.param(*br.conv_bias)));
    const Var bp = apply_linear(tape, br.proj_b, xc);
    const Var cp = apply_linear(tape, br.proj_c, xc);
    const Var delta = softplus(linear(xc, tape.param(*br.delta_weight), tape.param(*br.delta_bias)));
    const Var a = neg_exp(tape.param(*br.a_log));
    return selective_scan(xc, delta, a, bp, cp, mode);
}

Var bi_mamba_forward(Tape& tape, const BiMambaBlock& block, Var tokens) {
    require_width("bi_mamba_forward", tokens, block.dims.d_model);
    const Var normed = apply_layer_norm(tape, block.norm, tokens);
    const Var x = apply_linear(tape, block.in_x, normed);
    const Var z = apply_linear(tape, block.in_z, normed);
    const Var y_fwd = apply_ssm_branch(tape, block.forward, x, block.mode);
    const Var y_bwd = reverse_tokens(apply_ssm_branch(tape, block.backward, reverse_tokens(x), block.mode));
    const Var gate = silu(z);
    const Var mixed = add(mul(y_fwd, gate), mul(y_bwd, gate));
    return add(apply_linear(tape, block.out, mixed), tokens);
}

Var ifm_forward(Tape& tape, const IfmBlock& block, Var a1, Var a2) {
    require_width("ifm_forward", a1, block.dims.d_model);
    require_width("ifm_forward", a2, block.dims.d_model);
    if (a1.shape() != a2.shape()) {
        throw DimensionError("ifm_forward: modality sequences must be aligned, got " + shape_str(a1.shape()) +
                             " and " + shape_str(a2.shape()));
    }
    Var normed[2];
    Var y[2];
    const Var inputs[2] = {a1, a2};
    for (int m = 0; m < 2; ++m) {
        const auto& mod = block.modality[m];
        normed[m] = apply_layer_norm(tape, mod.norm, inputs[m]);
        const Var x = apply_linear(tape, mod.in_x, normed[m]);
        y[m] = apply_ssm_branch(tape, mod.ssm, x, block.mode);
    }
    const Var z1 = apply_linear(tape, block.in_z, normed[0]);
    const Var z2 = apply_linear(tape, block.in_z, normed[1]);
    const Var g1 = mul(y[0], silu(z2));
    const Var g2 = mul(y[1], silu(z1));
    return apply_linear(tape, block.out, concat_channels(g1, g2));
}

std::size_t linear_param_count(std::size_t in, std::size_t out, bool with_bias) {
    return in * out + (with_bias ? out : 0);
}

std::size_t ssm_branch_param_count(const BlockDims& d) {
    const std::size_t E = d.d_inner, N = d.d_state, W = d.conv_width;
    return (E * W + E) + 2 * linear_param_count(E, N) + (E * E + E) + E * N;
}

std::size_t bi_mamba_param_count(const BlockDims& d) {
    return 2 * d.d_model + 2 * linear_param_count(d.d_model, d.d_inner) + 2 * ssm_branch_param_count(d) +
           linear_param_count(d.d_inner, d.d_model);
}

std::size_t ifm_param_count(const BlockDims& d) {
    return 2 * (2 * d.d_model + linear_param_count(d.d_model, d.d_inner) + ssm_branch_param_count(d)) +
           linear_param_count(d.d_model, d.d_inner) + linear_param_count(2 * d.d_inner, d.d_model);
}

}  // namespace survmamba
