#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "survmamba/hierarchy.hpp"
#include "survmamba/survstats.hpp"
#include "survmamba/tensor.hpp"

namespace survmamba {

struct PatientRecord {
    std::string id;
    HierarchicalBag histology;  // raw patch features [K_g, D_raw] per region
    Tensor expression;          // [n_genes]
    double time = 0;            // months, > 0
    bool censored = false;
    std::size_t t_bin = 0;

    SurvivalOutcome outcome() const { return {time, !censored}; }
};

inline constexpr std::size_t kFoldCount = 5;

struct SurvivalDataset {
    std::vector<PatientRecord> records;
    GroupingConfig grouping;
    std::vector<double> bin_edges;  // T_bins + 1, last is +inf
    std::vector<std::size_t> folds;  // per record, in [0, kFoldCount)
    bool fixed_bins = false;         // edges supplied by the manifest

    std::size_t t_bins() const { return bin_edges.empty() ? 0 : bin_edges.size() - 1; }
    std::size_t histology_dim() const;
    std::vector<std::size_t> fold_members(std::size_t fold) const;
    std::vector<std::size_t> training_members(std::size_t fold) const;
};

struct BinAssignment {
    std::vector<double> edges;
    std::vector<std::size_t> bins;
};

// Edges at the 0, 1/T, ..., 1 linear-interpolation quantiles of the
// uncensored times, with edges[0] = 0 and edges[T] = +inf. Intervals are
// (lo, hi]. Throws ConfigError with fewer than T uncensored records.
BinAssignment assign_bins(std::span<const double> times, std::span<const bool> censored, std::size_t t_bins);
std::size_t bin_of(std::span<const double> edges, double time);
// Recomputes edges from `members` (all records when empty) unless
// `edges` is given, then assigns every record.
void apply_bins(SurvivalDataset& data, std::size_t t_bins, std::span<const std::size_t> members = {},
                std::optional<std::vector<double>> edges = std::nullopt);

// Seeded shuffle, then round-robin: sizes differ by at most one.
std::vector<std::size_t> assign_folds(std::size_t n, std::uint64_t seed, std::size_t k = kFoldCount);

struct SynthSpec {
    std::size_t n_patients = 500;
    std::size_t regions = 4;
    std::size_t patches_per_region = 16;
    std::size_t histology_dim = 64;
    std::size_t processes = 8;
    std::size_t functions_per_process = 4;
    std::size_t genes_per_function = 8;
    double beta = 2.0;
    double noise = 0.1;
    double censoring_rate = 0.3;
    double base_hazard = 0.05;
    std::size_t signal_region = 0;
    std::size_t signal_function = 0;
    std::size_t t_bins = 4;

    void validate() const;
};

struct SyntheticData {
    SurvivalDataset dataset;
    std::vector<double> latent;  // planted u per patient
};

// u ~ N(0,1) shifts every feature of one region and every gene of one
// function; time ~ Exp(base_hazard * exp(beta * u)); a censored subject is
// observed at a uniform fraction of its time.
SyntheticData synth_generate(const SynthSpec& spec, std::uint64_t seed);

SynthSpec load_synth_spec(const std::filesystem::path& path);

// "SMB1" feature-bag text files.
HierarchicalBag read_bag(const std::filesystem::path& path, Modality modality);
void write_bag(const std::filesystem::path& path, const HierarchicalBag& bag);

nlohmann::json grouping_to_json(const GroupingConfig& cfg);
GroupingConfig grouping_from_json(const nlohmann::json& j);  // throws DataError
GroupingConfig read_grouping(const std::filesystem::path& path);
void write_grouping(const std::filesystem::path& path, const GroupingConfig& cfg);

// Genomics bags store one group per function (id = function id) holding its
// genes' values as 1-wide tokens in catalog gene order.
HierarchicalBag expression_to_bag(const Tensor& expr, const GroupingConfig& cfg);
Tensor bag_to_expression(const HierarchicalBag& bag, const GroupingConfig& cfg, const std::string& patient);

// Loads the manifest and every referenced file; validates against the
// grouping config. Errors name the patient and the offending path or id.
SurvivalDataset load_dataset(const std::filesystem::path& manifest, std::uint64_t fold_seed = 0,
                             std::size_t t_bins = 4);
// Writes manifest.json, grouping.json and per-patient bag files into `dir`.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const SurvivalDataset& data);

}  // namespace survmamba
