#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fixtures/derived.hpp"
#include "support/fixture_fill.hpp"
#include "support/lti_instance.hpp"
#include "survmamba/fusion.hpp"
#include "survmamba/grad_suite.hpp"
#include "survmamba/model.hpp"
#include "survmamba/ssm.hpp"
#include "survmamba/survstats.hpp"
#include "survmamba/train.hpp"

using namespace survmamba;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome kernel_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> len(1, 64), width(1, 8);
    double conv_err = 0.0, par_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = len(rng), e = width(rng), n = width(rng);
        const auto inst = testsupport::make_lti(2, m, e, n, trial % 2 ? Discretization::zoh : Discretization::euler, rng);
        const Tensor rec = selective_scan_recurrent(inst.x, inst.dp, inst.cproj);
        const Tensor conv = lti_convolve(inst.x, lti_kernel(inst.abar0, inst.bbar0, inst.c0, m));
        const Tensor par = selective_scan_parallel(inst.x, inst.dp, inst.cproj);
        conv_err = std::max(conv_err, testsupport::max_abs_diff(rec.values(), conv.values()));
        par_err = std::max(par_err, testsupport::max_abs_diff(rec.values(), par.values()));
    }
    const double secs = seconds_since(t0);
    o.require(conv_err <= 1e-8, "conv deviation " + fmt("%.3g", conv_err));
    o.require(par_err <= 1e-10, "parallel deviation " + fmt("%.3g", par_err));
    o.require(secs < 10.0, "runtime " + fmt("%.1f s", secs));
    if (o.pass) o.detail = "conv " + fmt("%.2g", conv_err) + ", parallel " + fmt("%.2g", par_err) + ", " + fmt("%.2f s", secs);
    return o;
}

Outcome gradient_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto entries = run_grad_suite(GradSuiteConfig{}, "all");
    const double secs = seconds_since(t0);
    double prim = 0.0, comp = 0.0;
    for (const auto& e : entries) {
        (e.module == "primitives" ? prim : comp) = std::max(e.module == "primitives" ? prim : comp, e.result.max_rel_error);
        const double tol = e.module == "primitives" ? 1e-6 : 1e-4;
        o.require(e.result.max_rel_error <= tol, e.module + "/" + e.name + " " + fmt("%.3g", e.result.max_rel_error));
    }
    o.require(secs < 60.0, "runtime " + fmt("%.1f s", secs));
    if (o.pass) {
        o.detail = std::to_string(entries.size()) + " checks, primitives " + fmt("%.2g", prim) + ", composites " +
                   fmt("%.2g", comp) + ", " + fmt("%.1f s", secs);
    }
    return o;
}

Outcome construction_identities() {
    Outcome o;
    std::mt19937_64 rng(3);
    const BlockDims dims{32, 64, 16, 4};
    ParameterSet ps;
    const auto bi = make_bi_mamba_block(ps, "bi", dims, Discretization::zoh, rng);
    const auto ifm = make_ifm_block(ps, "ifm", dims, Discretization::zoh, rng);
    const Tensor x = testsupport::random_tensor({2, 17, 32}, rng, -4, 4);
    const Tensor y = testsupport::random_tensor({2, 17, 32}, rng, -4, 4);
    Tape t(false);
    o.require(bi_mamba_forward(t, bi, t.constant(x)).value().values() == x.values(), "bi-mamba not identity");
    for (double v : ifm_forward(t, ifm, t.constant(x), t.constant(y)).value().values())
        if (v != 0.0) {
            o.require(false, "ifm not zero");
            break;
        }
    Parameter raw{"alpha", Tensor::scalar(0.0)};
    const Tensor hf = testsupport::random_tensor({32}, rng), hc = testsupport::random_tensor({32}, rng);
    const Tensor h = adaptive_fuse(t, t.constant(hf), t.constant(hc), AlphaParam{&raw}).value();
    for (std::size_t i = 0; i < 32; ++i)
        if (h[i] != (hf[i] + hc[i]) / 2.0) {
            o.require(false, "adaptive_fuse midpoint inexact");
            break;
        }
    if (o.pass) o.detail = "identity, zero and midpoint exact";
    return o;
}

std::vector<SurvivalOutcome> outcomes(std::vector<double> times, std::vector<int> events) {
    std::vector<SurvivalOutcome> out;
    for (std::size_t i = 0; i < times.size(); ++i) out.push_back({times[i], events[i] != 0});
    return out;
}

Outcome statistics_oracles() {
    Outcome o;
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(2, 200);
    std::uniform_int_distribution<int> risk(0, 20);
    std::bernoulli_distribution ev(0.6);
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = size(rng);
        std::uniform_int_distribution<int> tm(1, static_cast<int>(std::max<std::size_t>(2, n / 3)));
        std::vector<double> r;
        std::vector<SurvivalOutcome> out;
        for (std::size_t i = 0; i < n; ++i) {
            r.push_back(0.25 * risk(rng));
            out.push_back({static_cast<double>(tm(rng)), ev(rng)});
        }
        out[0] = {0.5, true};
        mismatches += concordance_index(r, out) != testsupport::brute_force_cindex(r, out);
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " c-index mismatches");

    const KmCurve all = kaplan_meier(outcomes({1, 2, 3}, {1, 1, 1}));
    o.require(all.survival == std::vector<double>{2.0 / 3.0, 1.0 / 3.0, 0.0}, "KM all-events");
    const KmCurve cens = kaplan_meier(outcomes({1, 2, 3}, {1, 0, 1}));
    o.require(cens.survival == std::vector<double>{2.0 / 3.0, 0.0} && cens.times == std::vector<double>{1, 3},
              "KM censored");
    o.require(kaplan_meier(outcomes({1, 2, 3}, {0, 0, 0})).at(5.0) == 1.0, "KM all-censored");

    const auto a = outcomes({1, 4, 6, 9}, {1, 0, 1, 1});
    const LogRankResult same = logrank_test(a, a);
    o.require(same.chi2 == 0.0 && same.p == 1.0, "log-rank identical groups");
    const LogRankResult four = logrank_test(outcomes({1, 2}, {1, 1}), outcomes({10, 11}, {1, 1}));
    o.require(four.chi2 > 1.5 && four.p < 0.2, "log-rank 4-subject bounds");
    o.require(std::abs(four.chi2 - fixtures::logrank_4_chi2) <= 1e-12, "log-rank 4-subject chi2");
    const double p = chi2_sf(3.841, 1);
    o.require(std::abs(p - 0.05) <= 1e-3, "p(3.841) = " + fmt("%.6g", p));
    if (o.pass) o.detail = "50/50 c-index exact, KM and log-rank fixtures exact, p(3.841) = " + fmt("%.6f", p);
    return o;
}

Outcome loss_fixtures() {
    Outcome o;
    const Tensor half = Tensor::vector({0.5, 0.5});
    const double ev = survival_nll(half, 1, false), ce = survival_nll(half, 1, true);
    o.require(std::abs(ev - 1.386294) <= 1e-6 && std::abs(ev - fixtures::nll_two_bins) <= 1e-9, "event fixture");
    o.require(std::abs(ce - 1.386294) <= 1e-6 && std::abs(ce - fixtures::nll_two_bins) <= 1e-9, "censored fixture");

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> bins(2, 8);
    std::normal_distribution<double> nd(0.0, 4.0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t T = bins(rng), D = 3;
        Parameter w{"w", Tensor(Shape{D, T})}, b{"b", Tensor(Shape{T})};
        Tensor h(Shape{D});
        for (double& v : w.value.data()) v = nd(rng);
        for (double& v : b.value.data()) v = nd(rng);
        for (double& v : h.data()) v = nd(rng);
        Tape t(false);
        const HazardOutput out = hazard_output(hazard_head(t, t.constant(h), Linear{&w, &b}).value());
        for (std::size_t k = 1; k < T; ++k) violations += out.survival[k] > out.survival[k - 1];
    }
    o.require(violations == 0, std::to_string(violations) + " monotonicity violations");
    if (o.pass) o.detail = "both fixtures " + fmt("%.9f", ev) + ", 1000 heads monotone";
    return o;
}

struct EndToEnd {
    std::vector<double> loss;
    std::optional<double> c_index;
    double p = 1.0;
    double seconds = 0.0;
};

EndToEnd end_to_end_run() {
    const auto t0 = Clock::now();
    SynthSpec spec;
    spec.beta = 2.0;
    spec.n_patients = 500;
    spec.regions = 4;
    spec.patches_per_region = 16;
    spec.processes = 8;
    spec.functions_per_process = 4;
    const SyntheticData synth = synth_generate(spec, 7);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.model.dims = BlockDims{32, 64, 8, 4};
    const TrainResult tr = train(synth.dataset, 0, cfg);
    const EvalResult ev = evaluate(tr.model, synth.dataset, 0);
    return {tr.epoch_loss, ev.c_index, ev.logrank.p, seconds_since(t0)};
}

Outcome end_to_end(const EndToEnd& r) {
    Outcome o;
    o.require(r.c_index.has_value() && *r.c_index >= 0.75,
              "c-index " + (r.c_index ? fmt("%.4f", *r.c_index) : std::string("undefined")));
    o.require(r.p < 0.05, "log-rank p " + fmt("%.3g", r.p));
    o.require(r.seconds < 600.0, "wall time " + fmt("%.0f s", r.seconds));
    if (o.pass) {
        o.detail = "c-index " + fmt("%.4f", *r.c_index) + ", log-rank p " + fmt("%.3g", r.p) + ", " +
                   fmt("%.0f s", r.seconds);
    }
    return o;
}

Outcome determinism(const EndToEnd& first) {
    Outcome o;
    const EndToEnd again = end_to_end_run();
    o.require(again.loss == first.loss, "loss trace differs");
    o.require(again.c_index == first.c_index, "c-index differs");
    if (o.pass) o.detail = "20-epoch loss trace and c-index bit-identical";
    return o;
}

Outcome complexity() {
    Outcome o;
    struct Named {
        const char* name;
        ModelConfig cfg;
        GroupingConfig grouping;
    };
    std::vector<Named> configs;
    {
        ModelConfig c;
        c.dims = BlockDims{8, 16, 4, 2};
        c.d_raw = 6;
        c.genomic_hidden = 4;
        c.t_bins = 4;
        configs.push_back({"tiny", c, make_uniform_catalog(2, 2, 3)});
    }
    {
        ModelConfig c;
        c.dims = BlockDims{32, 64, 8, 4};
        configs.push_back({"synthetic", c, make_uniform_catalog(8, 4, 8)});
    }
    {
        ModelConfig c;
        c.d_raw = 768;
        configs.push_back({"default-catalog", c, make_default_catalog(8)});
    }
    std::string counts;
    for (const auto& n : configs) {
        const SurvMambaModel m(n.cfg, n.grouping);
        const std::size_t enumerated = m.params().scalar_count();
        const std::size_t closed = closed_form_param_count(n.cfg, n.grouping);
        o.require(enumerated == closed, std::string(n.name) + " " + std::to_string(enumerated) + " vs " +
                                            std::to_string(closed));
        counts += (counts.empty() ? "" : "/") + std::to_string(enumerated);
    }

    ScanBenchConfig bench;
    bench.modes = {ScanMode::recurrent};
    bench.channels = 16;
    bench.state = 16;
    bench.reps = 5;
    std::vector<double> ms, ts;
    for (std::size_t m : {1024u, 2048u, 4096u, 8192u}) {
        bench.length = m;
        ms.push_back(static_cast<double>(m));
        ts.push_back(run_scan_bench(bench).timings.at(0).best_seconds);
    }
    const double n = static_cast<double>(ms.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        mx += ms[i] / n;
        my += ts[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        sxy += (ms[i] - mx) * (ts[i] - my);
        sxx += (ms[i] - mx) * (ms[i] - mx);
        syy += (ts[i] - my) * (ts[i] - my);
    }
    const double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0.0;
    o.require(r2 >= 0.98, "scan R^2 " + fmt("%.4f", r2));
    if (o.pass) o.detail = "params " + counts + " match closed form, recurrent scan R^2 " + fmt("%.4f", r2);
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* title, const std::function<Outcome()>& run) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failures += !o.pass;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, "kernel equivalence", kernel_equivalence);
    report(2, "gradient suite", gradient_suite);
    report(3, "construction identities", construction_identities);
    report(4, "statistics oracles", statistics_oracles);
    report(5, "loss fixtures", loss_fixtures);
    EndToEnd first;
    report(6, "end-to-end synthetic", [&] {
        first = end_to_end_run();
        return end_to_end(first);
    });
    report(7, "determinism", [&] { return determinism(first); });
    report(8, "complexity reporter", complexity);
    return failures == 0 ? 0 : 1;
}
