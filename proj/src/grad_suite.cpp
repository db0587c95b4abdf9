#include "survmamba/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "survmamba/error.hpp"
#include "survmamba/fusion.hpp"
#include "survmamba/hierarchy.hpp"
#include "survmamba/model.hpp"
#include "survmamba/ops.hpp"

namespace survmamba {
namespace {

using Op = std::function<Var(Tape&)>;

Tensor random_tensor(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data()) v = d(rng);
    return t;
}

// Projects the op output onto fixed random weights so every output entry
// contributes to the checked scalar.
GradCheckResult check(const Op& op, ParameterSet& params, Rng& rng, double h) {
    Tape probe(false);
    const Tensor w = random_tensor(op(probe).value().shape(), -1.0, 1.0, rng);
    return grad_check([&](Tape& t) { return weighted_sum(op(t), w); }, params, h);
}

// Conditions a freshly built parameter set for finite differences. Output
// projections leave zero, the selective-SSM input/readout projections get
// unit scale and step sizes land in [0.3, 1], so parameters behind the scans
// move the objective well above double-precision resolution.
void prepare_for_check(ParameterSet& params, Rng& rng) {
    auto fill = [&](Parameter& p, double bound) {
        std::uniform_real_distribution<double> d(-bound, bound);
        for (double& v : p.value.data()) v = d(rng);
    };
    for (auto& p : params) {
        const std::string& n = p->name;
        if (n.find(".linear_t.") != std::string::npos) {
            fill(*p, 1.0);
        } else if (n.find(".linear_b.") != std::string::npos || n.find(".linear_c.") != std::string::npos) {
            fill(*p, 1.0);
        } else if (n.ends_with(".delta_bias")) {
            std::uniform_real_distribution<double> d(0.3, 1.0);
            for (double& v : p->value.data()) {
                const double dt = d(rng);
                v = dt + std::log(-std::expm1(-dt));
            }
        }
    }
}

class Runner {
public:
    Runner(const GradSuiteConfig& cfg, std::vector<GradSuiteEntry>& out) : cfg_(cfg), out_(out), rng_(cfg.seed) {}

    Rng& rng() { return rng_; }
    // Each module draws from its own stream, so results do not depend on
    // which other modules ran first.
    void reseed() { rng_.seed(cfg_.seed); }

    void record(const std::string& module, const std::string& name, const GradCheckResult& r) {
        const double tol = module == "primitives" ? cfg_.primitive_tolerance : cfg_.composite_tolerance;
        out_.push_back({module, name, r, tol});
    }

    void primitive(const std::string& name, const std::function<Op(ParameterSet&, Rng&)>& build) {
        ParameterSet ps;
        const Op op = build(ps, rng_);
        record("primitives", name, check(op, ps, rng_, cfg_.step));
    }

private:
    const GradSuiteConfig& cfg_;
    std::vector<GradSuiteEntry>& out_;
    Rng rng_;
};

void run_primitives(Runner& run) {
    auto rnd = [](ParameterSet& ps, const char* name, Shape s, double lo, double hi, Rng& rng) -> Parameter& {
        return ps.add(name, random_tensor(std::move(s), lo, hi, rng));
    };
    run.primitive("linear", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {2, 3, 4}, -1, 1, rng);
        Parameter& w = rnd(ps, "w", {4, 5}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {5}, -1, 1, rng);
        return Op([&](Tape& t) { return linear(t.param(x), t.param(w), t.param(b)); });
    });
    run.primitive("add", [&](ParameterSet& ps, Rng& rng) {
        Parameter& a = rnd(ps, "a", {3, 4}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {3, 4}, -1, 1, rng);
        return Op([&](Tape& t) { return add(t.param(a), t.param(b)); });
    });
    run.primitive("mul", [&](ParameterSet& ps, Rng& rng) {
        Parameter& a = rnd(ps, "a", {3, 4}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {3, 4}, -1, 1, rng);
        return Op([&](Tape& t) { return mul(t.param(a), t.param(b)); });
    });
    run.primitive("scale", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 4}, -1, 1, rng);
        return Op([&](Tape& t) { return scale(t.param(x), 1.7); });
    });
    run.primitive("sigmoid", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 4}, -3, 3, rng);
        return Op([&](Tape& t) { return sigmoid(t.param(x)); });
    });
    run.primitive("silu", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 4}, -3, 3, rng);
        return Op([&](Tape& t) { return silu(t.param(x)); });
    });
    run.primitive("softplus", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 4}, -3, 3, rng);
        return Op([&](Tape& t) { return softplus(t.param(x)); });
    });
    run.primitive("neg_exp", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 4}, -1, 1, rng);
        return Op([&](Tape& t) { return neg_exp(t.param(x)); });
    });
    run.primitive("layer_norm", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {3, 5}, -2, 2, rng);
        Parameter& g = rnd(ps, "gamma", {5}, 0.5, 1.5, rng);
        Parameter& b = rnd(ps, "beta", {5}, -1, 1, rng);
        return Op([&](Tape& t) { return layer_norm(t.param(x), t.param(g), t.param(b), 1e-5); });
    });
    run.primitive("causal_conv1d", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {2, 5, 3}, -1, 1, rng);
        Parameter& k = rnd(ps, "kernel", {3, 3}, -1, 1, rng);
        Parameter& b = rnd(ps, "bias", {3}, -1, 1, rng);
        return Op([&](Tape& t) { return causal_depthwise_conv1d(t.param(x), t.param(k), t.param(b)); });
    });
    run.primitive("reverse_tokens", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {2, 4, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return reverse_tokens(t.param(x)); });
    });
    run.primitive("concat_channels", [&](ParameterSet& ps, Rng& rng) {
        Parameter& a = rnd(ps, "a", {1, 4, 2}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {1, 4, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return concat_channels(t.param(a), t.param(b)); });
    });
    run.primitive("concat_rows", [&](ParameterSet& ps, Rng& rng) {
        Parameter& a = rnd(ps, "a", {2, 3}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {3, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return concat_rows({t.param(a), t.param(b)}); });
    });
    run.primitive("stack_rows", [&](ParameterSet& ps, Rng& rng) {
        Parameter& a = rnd(ps, "a", {3}, -1, 1, rng);
        Parameter& b = rnd(ps, "b", {3}, -1, 1, rng);
        return Op([&](Tape& t) { return stack_rows({t.param(a), t.param(b), t.param(a)}); });
    });
    run.primitive("slice_rows", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {5, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return slice_rows(t.param(x), 1, 4); });
    });
    run.primitive("reshape", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {2, 6}, -1, 1, rng);
        return Op([&](Tape& t) { return reshape(t.param(x), Shape{3, 4}); });
    });
    run.primitive("mean_tokens", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {1, 4, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return mean_tokens(t.param(x)); });
    });
    run.primitive("max_tokens", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {4, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return max_tokens(t.param(x)); });
    });
    run.primitive("segment_mean", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {5, 3}, -1, 1, rng);
        return Op([&](Tape& t) { return segment_mean(t.param(x), 2); });
    });
    run.primitive("sum", [&](ParameterSet& ps, Rng& rng) {
        Parameter& x = rnd(ps, "x", {4}, -1, 1, rng);
        return Op([&](Tape& t) { return sum(t.param(x)); });
    });
    for (Discretization mode : {Discretization::euler, Discretization::zoh}) {
        run.primitive("selective_scan_" + std::string(to_string(mode)), [&, mode](ParameterSet& ps, Rng& rng) {
            Parameter& x = rnd(ps, "x", {1, 5, 3}, -1, 1, rng);
            Parameter& delta = rnd(ps, "delta", {1, 5, 3}, 0.05, 0.5, rng);
            Parameter& a = rnd(ps, "a", {3, 2}, -2.0, -0.3, rng);
            Parameter& bp = rnd(ps, "bproj", {1, 5, 2}, -1, 1, rng);
            Parameter& cp = rnd(ps, "cproj", {1, 5, 2}, -1, 1, rng);
            return Op([&, mode](Tape& t) {
                return selective_scan(t.param(x), t.param(delta), t.param(a), t.param(bp), t.param(cp), mode);
            });
        });
    }
    run.primitive("adaptive_fuse", [&](ParameterSet& ps, Rng& rng) {
        Parameter& f = rnd(ps, "fine", {4}, -1, 1, rng);
        Parameter& c = rnd(ps, "coarse", {4}, -1, 1, rng);
        Parameter& raw = rnd(ps, "alpha", {}, -1, 1, rng);
        return Op([&](Tape& t) { return adaptive_fuse(t, t.param(f), t.param(c), AlphaParam{&raw}); });
    });
    run.primitive("hazard_head", [&](ParameterSet& ps, Rng& rng) {
        Parameter& h = rnd(ps, "features", {4}, -1, 1, rng);
        Linear head = make_linear(ps, "head", 4, 3, rng);
        return Op([&, head](Tape& t) { return hazard_head(t, t.param(h), head); });
    });
    for (bool censored : {true, false}) {
        run.primitive(censored ? "survival_nll_censored" : "survival_nll_event", [&, censored](ParameterSet& ps, Rng& rng) {
            Parameter& h = rnd(ps, "hazards", {4}, 0.1, 0.9, rng);
            return Op([&, censored](Tape& t) { return survival_nll(t.param(h), 2, censored); });
        });
    }
}

void run_blocks(Runner& run, const GradSuiteConfig& cfg) {
    const std::size_t L = cfg.length, D = cfg.dims.d_model;
    for (Discretization mode : {Discretization::euler, Discretization::zoh}) {
        ParameterSet ps;
        const BiMambaBlock block = make_bi_mamba_block(ps, "bimamba", cfg.dims, mode, run.rng());
        prepare_for_check(ps, run.rng());
        Parameter& x = ps.add("tokens", random_tensor({1, L, D}, -1, 1, run.rng()));
        const Op op = [&](Tape& t) { return bi_mamba_forward(t, block, t.param(x)); };
        run.record("blocks", "bi_mamba_" + std::string(to_string(mode)), check(op, ps, run.rng(), cfg.block_step));
    }
    {
        ParameterSet ps;
        const IfmBlock block = make_ifm_block(ps, "ifm", cfg.dims, Discretization::euler, run.rng());
        prepare_for_check(ps, run.rng());
        Parameter& a1 = ps.add("a1", random_tensor({1, L, D}, -1, 1, run.rng()));
        Parameter& a2 = ps.add("a2", random_tensor({1, L, D}, -1, 1, run.rng()));
        const Op op = [&](Tape& t) { return ifm_forward(t, block, t.param(a1), t.param(a2)); };
        run.record("blocks", "ifm", check(op, ps, run.rng(), cfg.block_step));
    }
}

void run_him(Runner& run, const GradSuiteConfig& cfg) {
    const std::size_t D = cfg.dims.d_model;
    ParameterSet ps;
    HimLevels levels;
    levels.fine.push_back(make_bi_mamba_block(ps, "fine", cfg.dims, Discretization::euler, run.rng()));
    levels.coarse.push_back(make_bi_mamba_block(ps, "coarse", cfg.dims, Discretization::euler, run.rng()));
    prepare_for_check(ps, run.rng());
    Parameter& g0 = ps.add("group0", random_tensor({3, D}, -1, 1, run.rng()));
    Parameter& g1 = ps.add("group1", random_tensor({2, D}, -1, 1, run.rng()));
    const Op op = [&](Tape& t) {
        TokenGroups groups{{"g0", "g1"}, {t.param(g0), t.param(g1)}};
        const HimOutput out = him_forward(t, groups, levels, PoolMode::mean);
        return concat_rows({out.fine.tokens[0], out.fine.tokens[1], out.coarse});
    };
    run.record("him", "him_forward", check(op, ps, run.rng(), cfg.block_step));
}

void run_pipeline(Runner& run, const GradSuiteConfig& cfg) {
    ModelConfig mc;
    mc.dims = cfg.dims;
    mc.t_bins = 3;
    mc.d_raw = 5;
    mc.genomic_hidden = 3;
    mc.seed = cfg.seed;
    const GroupingConfig grouping = make_uniform_catalog(2, 2, 2);
    SurvMambaModel model(mc, grouping);
    prepare_for_check(model.params(), run.rng());
    model.params().at("alpha").value[0] = 0.3;

    std::vector<PatientRecord> patients(2);
    for (std::size_t p = 0; p < patients.size(); ++p) {
        auto& r = patients[p];
        r.id = "toy" + std::to_string(p);
        r.histology.modality = Modality::histology;
        for (int g = 0; g < 2; ++g) {
            r.histology.groups.push_back({"R" + std::to_string(g), random_tensor({3, mc.d_raw}, -1, 1, run.rng())});
        }
        r.expression = random_tensor({grouping.gene_count()}, -1, 1, run.rng());
        r.time = 1.0 + static_cast<double>(p);
        r.censored = p == 0;
        r.t_bin = p == 0 ? 1 : 2;
    }
    const Objective f = [&](Tape& t) { return add(model.loss(t, patients[0]), model.loss(t, patients[1])); };
    run.record("pipeline", "two_patient_loss", grad_check(f, model.params(), cfg.pipeline_step));
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteConfig& cfg, std::string_view module) {
    bool known = module == "all";
    for (auto m : kGradModules) known = known || m == module;
    if (!known) throw ConfigError("unknown gradcheck module '" + std::string(module) + "'");
    std::vector<GradSuiteEntry> out;
    Runner run(cfg, out);
    auto want = [&](std::string_view m) { return module == "all" || module == m; };
    if (want("primitives")) run.reseed(), run_primitives(run);
    if (want("blocks")) run.reseed(), run_blocks(run, cfg);
    if (want("him")) run.reseed(), run_him(run, cfg);
    if (want("pipeline")) run.reseed(), run_pipeline(run, cfg);
    return out;
}

GradSuiteConfig grad_suite_config_from_json(const nlohmann::json& j) {
    GradSuiteConfig c;
    try {
        if (j.contains("d_model")) c.dims.d_model = j.at("d_model").get<std::size_t>();
        if (j.contains("d_inner")) c.dims.d_inner = j.at("d_inner").get<std::size_t>();
        if (j.contains("d_state")) c.dims.d_state = j.at("d_state").get<std::size_t>();
        if (j.contains("conv_width")) c.dims.conv_width = j.at("conv_width").get<std::size_t>();
        if (j.contains("length")) c.length = j.at("length").get<std::size_t>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("step")) c.step = j.at("step").get<double>();
        if (j.contains("block_step")) c.block_step = j.at("block_step").get<double>();
        if (j.contains("pipeline_step")) c.pipeline_step = j.at("pipeline_step").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("gradcheck config: ") + e.what());
    }
    if (c.length < 1 || !(c.step > 0) || !(c.block_step > 0) || !(c.pipeline_step > 0)) {
        throw ConfigError("gradcheck config: need length >= 1 and positive steps");
    }
    return c;
}

}  // namespace survmamba
