#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "survmamba/blocks.hpp"
#include "survmamba/grad_check.hpp"

namespace survmamba {

// Toy-sized gradient audit over every differentiable component.
struct GradSuiteConfig {
    BlockDims dims{4, 6, 3, 3};
    std::size_t length = 5;
    std::uint64_t seed = 11;
    // Finite-difference steps. Deeper composites have tiny entries whose
    // difference quotient drowns in roundoff at small h, so the step grows
    // with depth while truncation error stays below tolerance.
    double step = 1e-5;           // primitives
    double block_step = 1e-4;     // blocks, him
    double pipeline_step = 5e-4;  // pipeline
    double primitive_tolerance = 1e-6;
    double composite_tolerance = 1e-4;
};

struct GradSuiteEntry {
    std::string module;  // primitives | blocks | him | pipeline
    std::string name;
    GradCheckResult result;
    double tolerance = 0;
    bool passed() const { return result.max_rel_error <= tolerance; }
};

inline constexpr std::string_view kGradModules[] = {"primitives", "blocks", "him", "pipeline"};

// module: one of kGradModules, or "all".
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteConfig& cfg, std::string_view module = "all");

GradSuiteConfig grad_suite_config_from_json(const nlohmann::json& j);

}  // namespace survmamba
