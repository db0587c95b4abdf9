#pragma once

#include <functional>
#include <string>
#include <vector>

#include "survmamba/autograd.hpp"

namespace survmamba {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t entries = 0;
};

// Scalar objective recorded on the given tape. It must bind the checked
// parameters through Tape::param so that reverse mode reaches them.
using Objective = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central differences
/// (f(θ+h) - f(θ-h)) / 2h for every entry of every parameter and returns the
/// worst relative error |a - n| / max(1e-8, |a| + |n|).
///
/// Parameter gradients are zeroed before the reverse pass and left holding
/// the analytic gradient afterwards. Throws EvaluationError when f is not
/// finite at any evaluated point.
GradCheckResult grad_check(const Objective& f, const std::vector<Parameter*>& params, double h);
GradCheckResult grad_check(const Objective& f, ParameterSet& params, double h);

double relative_error(double analytic, double numeric);

}  // namespace survmamba
