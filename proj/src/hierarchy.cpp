#include "survmamba/hierarchy.hpp"

#include <algorithm>
#include <unordered_map>

#include "survmamba/error.hpp"
#include "survmamba/ops.hpp"

namespace survmamba {

std::string_view to_string(Modality m) { return m == Modality::histology ? "histology" : "genomics"; }

std::size_t HierarchicalBag::dim() const { return groups.empty() ? 0 : groups.front().tokens.cols(); }

std::size_t HierarchicalBag::token_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.tokens.rank() == 2 ? g.tokens.dim(0) : 0;
    return n;
}

void HierarchicalBag::validate() const {
    if (groups.empty()) throw DataError(std::string(to_string(modality)) + " bag has no groups");
    const std::size_t d = dim();
    for (const auto& g : groups) {
        if (g.tokens.rank() != 2 || g.tokens.dim(0) == 0) {
            throw DataError(std::string(to_string(modality)) + " group '" + g.id + "' is empty");
        }
        if (g.tokens.dim(1) != d) {
            throw DataError(std::string(to_string(modality)) + " group '" + g.id + "' has width " +
                            std::to_string(g.tokens.dim(1)) + ", expected " + std::to_string(d));
        }
    }
}

std::size_t GroupingConfig::function_index(std::string_view id) const {
    for (std::size_t i = 0; i < functions.size(); ++i)
        if (functions[i].id == id) return i;
    return static_cast<std::size_t>(-1);
}

std::size_t GroupingConfig::gene_count() const {
    std::size_t n = 0;
    for (const auto& f : functions)
        for (std::size_t g : f.genes) n = std::max(n, g + 1);
    return n;
}

void GroupingConfig::validate() const {
    if (processes.empty()) throw DataError("grouping config has no processes");
    std::unordered_map<std::string, int> seen;
    for (const auto& f : functions) {
        if (f.genes.empty()) throw DataError("function '" + f.id + "' has no genes");
        if (seen[f.id]++) throw DataError("duplicate function id '" + f.id + "'");
    }
    for (const auto& p : processes) {
        if (p.functions.empty()) throw DataError("process '" + p.id + "' lists no functions");
        for (const auto& fid : p.functions) {
            if (!seen.count(fid)) throw DataError("process '" + p.id + "' references unknown function id '" + fid + "'");
        }
    }
}

GroupingConfig make_uniform_catalog(std::size_t processes, std::size_t functions_per_process,
                                    std::size_t genes_per_function) {
    GroupingConfig cfg;
    std::size_t gene = 0;
    for (std::size_t p = 0; p < processes; ++p) {
        ProcessEntry pe{"P" + std::to_string(p), {}};
        for (std::size_t f = 0; f < functions_per_process; ++f) {
            FunctionEntry fe{"F" + std::to_string(cfg.functions.size()), {}};
            for (std::size_t g = 0; g < genes_per_function; ++g) fe.genes.push_back(gene++);
            pe.functions.push_back(fe.id);
            cfg.functions.push_back(std::move(fe));
        }
        cfg.processes.push_back(std::move(pe));
    }
    return cfg;
}

GroupingConfig make_default_catalog(std::size_t genes_per_function) {
    GroupingConfig cfg;
    const std::size_t nf = GroupingConfig::kDefaultFunctionCount, np = GroupingConfig::kDefaultProcessCount;
    std::size_t gene = 0;
    for (std::size_t f = 0; f < nf; ++f) {
        FunctionEntry fe{"F" + std::to_string(f), {}};
        for (std::size_t g = 0; g < genes_per_function; ++g) fe.genes.push_back(gene++);
        cfg.functions.push_back(std::move(fe));
    }
    const auto sizes = segment_sizes(nf, np);
    std::size_t next = 0;
    for (std::size_t p = 0; p < np; ++p) {
        ProcessEntry pe{"P" + std::to_string(p), {}};
        for (std::size_t k = 0; k < sizes[p]; ++k) pe.functions.push_back(cfg.functions[next++].id);
        cfg.processes.push_back(std::move(pe));
    }
    return cfg;
}

HierarchicalBag to_bag(const TokenGroups& groups, Modality modality) {
    HierarchicalBag bag{modality, {}};
    for (std::size_t i = 0; i < groups.size(); ++i) {
        Tensor t = groups.tokens[i].value();
        bag.groups.push_back({groups.ids[i], std::move(t)});
    }
    return bag;
}

GenomicsEncoder make_genomics_encoder(ParameterSet& params, const std::string& name, const GroupingConfig& cfg,
                                      std::size_t hidden, std::size_t d_model, Rng& rng) {
    GenomicsEncoder enc;
    for (const auto& f : cfg.functions) {
        const std::string fn = name + "." + f.id;
        enc.functions.push_back({make_linear(params, fn + ".hidden", f.genes.size(), hidden, rng),
                                 make_linear(params, fn + ".out", hidden, d_model, rng)});
    }
    return enc;
}

TokenGroups encode_histology(Tape& tape, const HierarchicalBag& raw, const Linear& projection) {
    const std::size_t d_raw = projection.weight->value.dim(0);
    TokenGroups out;
    for (const auto& g : raw.groups) {
        if (g.tokens.rank() != 2 || g.tokens.dim(0) == 0) throw DataError("histology region '" + g.id + "' is empty");
        if (g.tokens.dim(1) != d_raw) {
            throw DataError("histology region '" + g.id + "' has feature width " + std::to_string(g.tokens.dim(1)) +
                            ", encoder expects " + std::to_string(d_raw));
        }
        out.ids.push_back(g.id);
        out.tokens.push_back(apply_linear(tape, projection, tape.constant(g.tokens)));
    }
    return out;
}

TokenGroups encode_genomics(Tape& tape, const Tensor& expr, const GroupingConfig& cfg, const GenomicsEncoder& enc) {
    if (enc.functions.size() != cfg.functions.size()) {
        throw ConfigError("genomics encoder has " + std::to_string(enc.functions.size()) +
                          " function networks, grouping config lists " + std::to_string(cfg.functions.size()));
    }
    std::vector<Var> function_tokens;
    function_tokens.reserve(cfg.functions.size());
    for (std::size_t i = 0; i < cfg.functions.size(); ++i) {
        const auto& f = cfg.functions[i];
        Tensor gathered(Shape{1, f.genes.size()});
        for (std::size_t k = 0; k < f.genes.size(); ++k) {
            if (f.genes[k] >= expr.size()) {
                throw DataError("function '" + f.id + "' references gene " + std::to_string(f.genes[k]) +
                                " but the expression vector has " + std::to_string(expr.size()) + " genes");
            }
            gathered[k] = expr[f.genes[k]];
        }
        const Var h = silu(apply_linear(tape, enc.functions[i].hidden, tape.constant(std::move(gathered))));
        function_tokens.push_back(apply_linear(tape, enc.functions[i].out, h));
    }
    TokenGroups out;
    for (const auto& p : cfg.processes) {
        std::vector<Var> members;
        for (const auto& fid : p.functions) {
            const std::size_t idx = cfg.function_index(fid);
            if (idx >= cfg.functions.size()) {
                throw DataError("process '" + p.id + "' references unknown function id '" + fid + "'");
            }
            members.push_back(function_tokens[idx]);
        }
        if (members.empty()) throw DataError("process '" + p.id + "' lists no functions");
        out.ids.push_back(p.id);
        out.tokens.push_back(members.size() == 1 ? members.front() : concat_rows(members));
    }
    return out;
}

PoolMode parse_pool_mode(std::string_view name) {
    if (name == "mean") return PoolMode::mean;
    if (name == "max") return PoolMode::max;
    throw ConfigError("unknown pool mode '" + std::string(name) + "' (expected mean or max)");
}

std::string_view to_string(PoolMode mode) { return mode == PoolMode::mean ? "mean" : "max"; }

namespace {

Var run_stack(Tape& tape, std::span<const BiMambaBlock> stack, Var tokens2d) {
    const Tensor& v = tokens2d.value();
    if (v.rank() != 2) throw DimensionError("expected [K, D] tokens, got " + shape_str(v.shape()));
    if (stack.empty()) return tokens2d;
    Var seq = reshape(tokens2d, Shape{1, v.dim(0), v.dim(1)});
    for (const auto& block : stack) seq = bi_mamba_forward(tape, block, seq);
    return reshape(seq, Shape{v.dim(0), v.dim(1)});
}

}  // namespace

TokenGroups him_fine(Tape& tape, const TokenGroups& groups, std::span<const BiMambaBlock> stack) {
    TokenGroups out;
    out.ids = groups.ids;
    for (const Var& g : groups.tokens) out.tokens.push_back(run_stack(tape, stack, g));
    return out;
}

Var him_coarse(Tape& tape, const TokenGroups& refined, PoolMode pool, std::span<const BiMambaBlock> stack) {
    if (refined.size() == 0) throw DataError("him_coarse: no groups");
    std::vector<Var> pooled;
    pooled.reserve(refined.size());
    for (const Var& g : refined.tokens) pooled.push_back(pool == PoolMode::mean ? mean_tokens(g) : max_tokens(g));
    return run_stack(tape, stack, stack_rows(pooled));
}

HimOutput him_forward(Tape& tape, const TokenGroups& groups, const HimLevels& levels, PoolMode pool) {
    HimOutput out;
    out.fine = him_fine(tape, groups, levels.fine);
    out.coarse = him_coarse(tape, out.fine, pool, levels.coarse);
    return out;
}

}  // namespace survmamba
