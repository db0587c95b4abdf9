#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "survmamba/blocks.hpp"
#include "survmamba/data.hpp"
#include "survmamba/fusion.hpp"
#include "survmamba/hierarchy.hpp"

namespace survmamba {

struct ModelConfig {
    BlockDims dims;
    std::size_t t_bins = 4;
    std::size_t d_raw = 64;           // histology feature width
    std::size_t genomic_hidden = 32;  // per-function MLP width
    std::size_t depth = 1;            // Bi-Mamba blocks per HIM level
    std::size_t align_cap = kDefaultAlignCap;
    Discretization mode = Discretization::euler;
    PoolMode pool = PoolMode::mean;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForwardResult {
    FusedFeatures features;
    Var hazards;  // [T]
};

class SurvMambaModel {
public:
    SurvMambaModel(const ModelConfig& cfg, GroupingConfig grouping);

    SurvMambaModel(const SurvMambaModel&) = delete;
    SurvMambaModel& operator=(const SurvMambaModel&) = delete;
    SurvMambaModel(SurvMambaModel&&) = default;
    SurvMambaModel& operator=(SurvMambaModel&&) = default;

    const ModelConfig& config() const { return cfg_; }
    const GroupingConfig& grouping() const { return grouping_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    ForwardResult forward(Tape& tape, const PatientRecord& patient) const;
    Var loss(Tape& tape, const PatientRecord& patient) const;
    // Grad-free evaluation; safe to call concurrently.
    HazardOutput predict(const PatientRecord& patient) const;

    // Block handles, exposed for tests and the gradient checker.
    const Linear& histology_projection() const { return hist_proj_; }
    const GenomicsEncoder& genomics_encoder() const { return gen_enc_; }
    const HimLevels& histology_him() const { return hist_him_; }
    const HimLevels& genomics_him() const { return gen_him_; }
    const IfmBlock& fine_fusion() const { return ifm_fine_; }
    const IfmBlock& coarse_fusion() const { return ifm_coarse_; }
    const AlphaParam& alpha() const { return alpha_; }
    const Linear& head() const { return head_; }

private:
    ModelConfig cfg_;
    GroupingConfig grouping_;
    ParameterSet params_;
    Linear hist_proj_;
    GenomicsEncoder gen_enc_;
    HimLevels hist_him_;
    HimLevels gen_him_;
    IfmBlock ifm_fine_;
    IfmBlock ifm_coarse_;
    AlphaParam alpha_;
    Linear head_;
};

// Closed-form parameter count of a model built from (cfg, grouping).
std::size_t closed_form_param_count(const ModelConfig& cfg, const GroupingConfig& grouping);

// Reference input for FLOP estimates.
struct ComplexityInput {
    std::size_t regions = 4;
    std::size_t patches_per_region = 16;
};

struct ComplexityReport {
    std::size_t param_count = 0;   // enumerated from the registry
    std::size_t closed_form = 0;   // closed_form_param_count
    double flops = 0;              // one forward pass
    double scan_flops = 0;         // share of `flops` spent in selective scans
};

// FLOP conventions, per op on an [M, *] input:
//   linear in->out          2*M*in*out (+ M*out with bias)
//   layer norm (width D)    8*M*D
//   causal conv (E, W)      2*M*E*W + M*E
//   SiLU / sigmoid / softplus  4 per element
//   selective scan (E, N)   9*M*E*N
//   elementwise add / mul   1 per element
double scan_flops(std::size_t m, std::size_t e, std::size_t n);
double bi_mamba_flops(std::size_t m, const BlockDims& dims);
double ifm_flops(std::size_t m, const BlockDims& dims);
ComplexityReport report_complexity(const SurvMambaModel& model, const ComplexityInput& input);

// "SMCK" checkpoint: u32 count; per parameter u32 name length, name bytes,
// u32 rank, u64 dims, f64 payload; all little-endian. The model config and
// grouping go to "<path>.config.json".
void save_checkpoint(const std::filesystem::path& path, const SurvMambaModel& model);
SurvMambaModel load_checkpoint(const std::filesystem::path& path);

}  // namespace survmamba
