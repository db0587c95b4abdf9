#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "survmamba/autograd.hpp"
#include "survmamba/blocks.hpp"

namespace survmamba {

enum class Modality { histology, genomics };

std::string_view to_string(Modality m);

struct BagGroup {
    std::string id;
    Tensor tokens;  // [K_g, D], rows in scan order
};

/// Two-level bag for one modality: ordered groups (regions / processes),
/// each holding its fine-grained token rows (patches / functions).
struct HierarchicalBag {
    Modality modality = Modality::histology;
    std::vector<BagGroup> groups;

    // Token width shared by every group; 0 for an empty bag.
    std::size_t dim() const;
    std::size_t token_count() const;
    // Every group non-empty and all widths equal. Throws DataError.
    void validate() const;
};

struct ProcessEntry {
    std::string id;
    std::vector<std::string> functions;
};

struct FunctionEntry {
    std::string id;
    std::vector<std::size_t> genes;
};

/// Process -> function -> gene catalog. Genes may belong to several
/// functions; every process lists at least one known function.
struct GroupingConfig {
    std::vector<ProcessEntry> processes;
    std::vector<FunctionEntry> functions;

    static constexpr std::size_t kDefaultFunctionCount = 352;
    static constexpr std::size_t kDefaultProcessCount = 42;

    // Index into `functions`, or npos.
    std::size_t function_index(std::string_view id) const;
    // One past the largest gene index referenced.
    std::size_t gene_count() const;
    void validate() const;
};

// Catalog of `processes` processes, each with `functions_per_process`
// functions over disjoint runs of `genes_per_function` genes.
GroupingConfig make_uniform_catalog(std::size_t processes, std::size_t functions_per_process,
                                    std::size_t genes_per_function);
// Default-sized catalog (352 functions spread over 42 processes).
GroupingConfig make_default_catalog(std::size_t genes_per_function);

/// Differentiable counterpart of a bag: one [K_g, D] variable per group.
struct TokenGroups {
    std::vector<std::string> ids;
    std::vector<Var> tokens;

    std::size_t size() const { return tokens.size(); }
};

HierarchicalBag to_bag(const TokenGroups& groups, Modality modality);

// Per-function two-layer MLP: genes -> hidden (SiLU) -> D.
struct GenomicsEncoder {
    struct FunctionMlp {
        Linear hidden;
        Linear out;
    };
    std::vector<FunctionMlp> functions;  // aligned with GroupingConfig::functions
};

GenomicsEncoder make_genomics_encoder(ParameterSet& params, const std::string& name, const GroupingConfig& cfg,
                                      std::size_t hidden, std::size_t d_model, Rng& rng);

// Projects every patch row of each region through `projection`; groups keep
// region order. Throws DataError on an empty region.
TokenGroups encode_histology(Tape& tape, const HierarchicalBag& raw, const Linear& projection);

// Gathers each function's gene values, encodes them to one token, and groups
// tokens by process in catalog order. expr: [n_genes].
TokenGroups encode_genomics(Tape& tape, const Tensor& expr, const GroupingConfig& cfg, const GenomicsEncoder& enc);

enum class PoolMode { mean, max };

PoolMode parse_pool_mode(std::string_view name);
std::string_view to_string(PoolMode mode);

// Applies the shared block stack to each group independently.
TokenGroups him_fine(Tape& tape, const TokenGroups& groups, std::span<const BiMambaBlock> stack);

// Pools each refined group to one token and runs the coarse stack over the
// resulting length-G sequence. Returns [G, D].
Var him_coarse(Tape& tape, const TokenGroups& refined, PoolMode pool, std::span<const BiMambaBlock> stack);

struct HimOutput {
    TokenGroups fine;
    Var coarse;  // [G, D]
};

struct HimLevels {
    std::vector<BiMambaBlock> fine;
    std::vector<BiMambaBlock> coarse;
};

HimOutput him_forward(Tape& tape, const TokenGroups& groups, const HimLevels& levels, PoolMode pool);

}  // namespace survmamba
