#include "survmamba/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "survmamba/error.hpp"

namespace survmamba {
namespace {

double evaluate(const Objective& f) {
    Tape tape(false);
    const Var out = f(tape);
    if (out.value().size() != 1) throw DimensionError("grad_check: objective must be scalar");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw EvaluationError("grad_check: objective is not finite");
    return v;
}

}  // namespace

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const Objective& f, const std::vector<Parameter*>& params, double h) {
    if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");
    for (Parameter* p : params) p->value.zero_grad();
    {
        Tape tape(true);
        const Var out = f(tape);
        if (out.value().size() != 1) throw DimensionError("grad_check: objective must be scalar");
        if (!std::isfinite(out.value()[0])) throw EvaluationError("grad_check: objective is not finite");
        tape.backward(out);
    }
    GradCheckResult result;
    for (Parameter* p : params) {
        auto data = p->value.data();
        const auto grad = p->value.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double fp = evaluate(f);
            data[i] = saved - h;
            const double fm = evaluate(f);
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = relative_error(grad[i], numeric);
            ++result.entries;
            if (err > result.max_rel_error || result.entries == 1) {
                result.max_rel_error = err;
                result.worst_param = p->name;
                result.worst_index = i;
                result.analytic = grad[i];
                result.numeric = numeric;
            }
        }
    }
    return result;
}

GradCheckResult grad_check(const Objective& f, ParameterSet& params, double h) {
    std::vector<Parameter*> ps;
    for (auto& p : params) ps.push_back(p.get());
    return grad_check(f, ps, h);
}

}  // namespace survmamba
