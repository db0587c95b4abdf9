#pragma once

#include <cstddef>
#include <utility>

#include "survmamba/autograd.hpp"
#include "survmamba/blocks.hpp"
#include "survmamba/hierarchy.hpp"

namespace survmamba {

inline constexpr std::size_t kDefaultAlignCap = 256;
inline constexpr double kProbabilityFloor = 1e-12;

// min(l_i, l_g, cap)
std::size_t default_align_length(std::size_t l_i, std::size_t l_g, std::size_t cap = kDefaultAlignCap);

// Segment-mean pools both [L_*, D] sequences to exactly `length` rows.
// Throws ConfigError for length < 1 or a length beyond either input.
std::pair<Var, Var> align_fine_tokens(Var histology, Var genomics, std::size_t length);

// Rows of every group concatenated in group order: [sum K_g, D].
Var concat_groups(const TokenGroups& groups);

// IFM over the aligned sequences, then the token mean: -> [D].
Var fuse_fine(Tape& tape, Var histology_aligned, Var genomics_aligned, const IfmBlock& ifm);
// Aligns the coarse sequences to min(M, J) rows first, then as fuse_fine.
Var fuse_coarse(Tape& tape, Var histology_coarse, Var genomics_coarse, const IfmBlock& ifm);

struct AlphaParam {
    Parameter* raw = nullptr;  // scalar; alpha = sigmoid(raw)
    double value() const;
};

struct FusedFeatures {
    Var fine;    // H_f
    Var coarse;  // H_c
    Var mixed;   // H
};

// alpha * H_f + (1 - alpha) * H_c
Var adaptive_fuse(Tape& tape, Var fine, Var coarse, const AlphaParam& alpha);

struct HazardOutput {
    Tensor hazards;   // [T], each in (0, 1)
    Tensor survival;  // S[t] = prod_{k<=t} (1 - h[k])
    double risk = 0;  // -sum_t S[t]
};

HazardOutput hazard_output(const Tensor& hazards);

// sigmoid(linear(H)) -> [T]
Var hazard_head(Tape& tape, Var features, const Linear& head);

// Discrete-time negative log-likelihood for one subject.
//   censored: -log S[t]
//   event:    -log S[t-1] - log h[t],  S[-1] = 1
// Probabilities are clamped at 1e-12 before the log.
Var survival_nll(Var hazards, std::size_t t_bin, bool censored);
double survival_nll(const Tensor& hazards, std::size_t t_bin, bool censored);
double survival_nll(const HazardOutput& out, std::size_t t_bin, bool censored);

}  // namespace survmamba
