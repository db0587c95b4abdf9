#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "fixtures/derived.hpp"
#include "survmamba/error.hpp"
#include "survmamba/model.hpp"
#include "survmamba/train.hpp"

namespace fs = std::filesystem;
using namespace survmamba;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("survmamba_test_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SynthSpec small_spec() {
    SynthSpec s;
    s.n_patients = 60;
    s.regions = 2;
    s.patches_per_region = 3;
    s.histology_dim = 6;
    s.processes = 2;
    s.functions_per_process = 2;
    s.genes_per_function = 3;
    return s;
}

TrainConfig small_train(std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.seed = 3;
    c.optim.lr = 2e-3;
    c.model.dims = BlockDims{8, 16, 4, 2};
    c.model.genomic_hidden = 4;
    return c;
}

bool same_params(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (const auto& p : a) {
        const Parameter* q = b.find(p->name);
        if (!q || q->value.shape() != p->value.shape() || q->value.values() != p->value.values()) return false;
    }
    return true;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("synthetic generation is deterministic") {
    const SyntheticData a = synth_generate(small_spec(), 5);
    const SyntheticData b = synth_generate(small_spec(), 5);
    const SyntheticData c = synth_generate(small_spec(), 6);
    REQUIRE(a.dataset.records.size() == 60);
    CHECK(a.latent == b.latent);
    CHECK(a.latent != c.latent);
    for (std::size_t i = 0; i < 60; ++i) {
        const auto& ra = a.dataset.records[i];
        const auto& rb = b.dataset.records[i];
        CHECK(ra.time == rb.time);
        CHECK(ra.censored == rb.censored);
        CHECK(ra.expression.values() == rb.expression.values());
        for (std::size_t g = 0; g < ra.histology.groups.size(); ++g)
            CHECK(ra.histology.groups[g].tokens.values() == rb.histology.groups[g].tokens.values());
    }
    CHECK(a.dataset.folds == b.dataset.folds);
}

TEST_CASE("synthetic spec validation") {
    SynthSpec s = small_spec();
    s.censoring_rate = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.regions = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("planted factor is a strong oracle at beta 2") {
    SynthSpec s;
    s.beta = 2.0;
    s.noise = 0.1;
    s.n_patients = 500;
    const SyntheticData d = synth_generate(s, 7);
    std::vector<SurvivalOutcome> out;
    for (const auto& r : d.dataset.records) out.push_back(r.outcome());
    CHECK(concordance_index(d.latent, out) >= 0.80);

    // Held-out fold 0 alone.
    std::vector<double> u;
    std::vector<SurvivalOutcome> held;
    for (std::size_t i : d.dataset.fold_members(0)) {
        u.push_back(d.latent[i]);
        held.push_back(out[i]);
    }
    CHECK(concordance_index(u, held) >= 0.80);
}

TEST_CASE("no signal at beta 0") {
    SynthSpec s;
    s.beta = 0.0;
    s.n_patients = 500;
    const SyntheticData d = synth_generate(s, 7);
    std::vector<double> risk;
    std::vector<SurvivalOutcome> out;
    // Linear read-out of the region that would carry the signal.
    for (const auto& r : d.dataset.records) {
        const Tensor& t = r.histology.groups[s.signal_region].tokens;
        double m = 0.0;
        for (double v : t.values()) m += v;
        risk.push_back(m / static_cast<double>(t.size()));
        out.push_back(r.outcome());
    }
    CHECK(std::abs(concordance_index(risk, out) - 0.5) <= 0.05);
    CHECK(std::abs(concordance_index(d.latent, out) - 0.5) <= 0.05);
}

TEST_CASE("dataset save and load round trip") {
    const fs::path dir = scratch("roundtrip");
    const SyntheticData d = synth_generate(small_spec(), 9);
    const fs::path manifest = save_dataset(dir, d.dataset);
    const SurvivalDataset back = load_dataset(manifest);
    REQUIRE(back.records.size() == d.dataset.records.size());
    CHECK(back.folds == d.dataset.folds);
    CHECK(back.bin_edges == d.dataset.bin_edges);
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        const auto& a = d.dataset.records[i];
        const auto& b = back.records[i];
        CHECK(a.id == b.id);
        CHECK(a.time == b.time);
        CHECK(a.censored == b.censored);
        CHECK(a.t_bin == b.t_bin);
        CHECK(a.expression.values() == b.expression.values());
        REQUIRE(a.histology.groups.size() == b.histology.groups.size());
        for (std::size_t g = 0; g < a.histology.groups.size(); ++g) {
            CHECK(a.histology.groups[g].id == b.histology.groups[g].id);
            CHECK(a.histology.groups[g].tokens.shape() == b.histology.groups[g].tokens.shape());
            CHECK(a.histology.groups[g].tokens.values() == b.histology.groups[g].tokens.values());
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("missing bag file is named in the error") {
    const fs::path dir = scratch("missing");
    const SyntheticData d = synth_generate(small_spec(), 9);
    const fs::path manifest = save_dataset(dir, d.dataset);
    fs::path victim;
    for (const auto& e : fs::recursive_directory_iterator(dir / "bags"))
        if (e.is_regular_file()) {
            victim = e.path();
            break;
        }
    REQUIRE_FALSE(victim.empty());
    fs::remove(victim);
    try {
        load_dataset(manifest);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(victim.filename().string()) != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("hand-written one-patient manifest") {
    const fs::path dir = scratch("hand");
    write_text(dir / "grouping.json",
               R"({"processes": [{"id": "p", "functions": ["f"]}], "functions": [{"id": "f", "genes": [0, 1]}]})");
    write_text(dir / "h.smb", "SMB1 1 2\nregion0 2\n0.5 -1\n2 3.25\n");
    write_text(dir / "g.smb", "SMB1 1 1\nf 2\n1.5\n-2\n");
    write_text(dir / "manifest.json", R"({"grouping": "grouping.json", "bins": [0, 5, 10, "inf"],
        "patients": [{"id": "p1", "histology": "h.smb", "genomics": "g.smb", "time_months": 7.5, "censored": 0, "fold": 2}]})");
    const SurvivalDataset d = load_dataset(dir / "manifest.json");
    REQUIRE(d.records.size() == 1);
    const auto& r = d.records[0];
    REQUIRE(r.histology.groups.size() == 1);
    CHECK(r.histology.groups[0].id == "region0");
    CHECK(r.histology.groups[0].tokens.shape() == Shape{2, 2});
    CHECK(r.histology.groups[0].tokens.values() == std::vector<double>{0.5, -1, 2, 3.25});
    CHECK(r.expression.values() == std::vector<double>{1.5, -2});
    CHECK(r.t_bin == 1);
    CHECK(d.folds == std::vector<std::size_t>{2});
    CHECK(d.fixed_bins);

    write_text(dir / "bad.json", R"({"processes": [{"id": "p", "functions": ["nope"]}], "functions": [{"id": "f", "genes": [0]}]})");
    write_text(dir / "manifest2.json", R"({"grouping": "bad.json", "bins": [0, 5, "inf"],
        "patients": [{"id": "p1", "histology": "h.smb", "genomics": "g.smb", "time_months": 7.5, "censored": 0}]})");
    try {
        load_dataset(dir / "manifest2.json");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }

    write_text(dir / "h3.smb", "SMB1 1 3\nregion0 1\n1 2 3\n");
    write_text(dir / "manifest3.json", R"({"grouping": "grouping.json", "bins": [0, 5, "inf"],
        "patients": [{"id": "a", "histology": "h.smb", "genomics": "g.smb", "time_months": 1, "censored": 0},
                     {"id": "b", "histology": "h3.smb", "genomics": "g.smb", "time_months": 2, "censored": 0}]})");
    try {
        load_dataset(dir / "manifest3.json");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("bin edges and the tie rule") {
    std::vector<double> times;
    for (int i = 1; i <= 100; ++i) times.push_back(i);
    const auto none = std::make_unique<bool[]>(100);
    const BinAssignment b = assign_bins(times, std::span<const bool>(none.get(), 100), 4);
    REQUIRE(b.edges.size() == 5);
    CHECK(b.edges[0] == 0.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(b.edges[k + 1] - fixtures::bin_edges_1_to_100[k]) <= 1e-12);
    CHECK(std::isinf(b.edges[4]));
    for (std::size_t t : b.bins) CHECK(t < 4);
    CHECK(bin_of(b.edges, 25.75) == 0);
    CHECK(bin_of(b.edges, 25.7500001) == 1);
    CHECK(bin_of(b.edges, 1e9) == 3);
    CHECK(bin_of(b.edges, 0.01) == 0);

    std::vector<bool> cens_v{true, true, false, true, false};
    const auto cens = std::make_unique<bool[]>(5);
    for (int i = 0; i < 5; ++i) cens[i] = cens_v[i];
    CHECK_THROWS_AS(assign_bins(std::vector<double>{1, 2, 3, 4, 5}, std::span<const bool>(cens.get(), 5), 4),
                    ConfigError);
}

TEST_CASE("folds are disjoint, exhaustive and balanced") {
    for (std::size_t n : {5u, 7u, 23u, 500u}) {
        const auto folds = assign_folds(n, 11);
        REQUIRE(folds.size() == n);
        std::vector<std::size_t> count(kFoldCount, 0);
        for (std::size_t f : folds) {
            REQUIRE(f < kFoldCount);
            ++count[f];
        }
        const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
        CHECK(*hi - *lo <= 1);
        CHECK(*lo >= 1);
        CHECK(assign_folds(n, 11) == folds);
    }
}

TEST_CASE("rectification term") {
    for (std::size_t t = 1; t <= 5; ++t) CHECK(std::abs(radam_rho(t, 0.999) - fixtures::radam_rho_1_to_5[t - 1]) <= 1e-9);
    for (std::size_t t = 1; t <= 4; ++t) CHECK(radam_rho(t, 0.999) <= 4.0);
    CHECK(radam_rho(5, 0.999) > 4.0);
}

TEST_CASE("zero gradients decay parameters geometrically") {
    RAdamConfig cfg;
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> start = p;
    const std::vector<double> g(3, 0.0);
    RAdamState st;
    double factor = 1.0;
    for (std::size_t t = 1; t <= 50; ++t) {
        radam_step(p, g, st, t, cfg);
        factor *= 1.0 - cfg.lr * cfg.weight_decay;
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[i] - start[i] * factor) <= 1e-15);
    CHECK_THROWS_AS(radam_step(p, g, st, 0, cfg), ConfigError);
}

TEST_CASE("radam solves a quadratic") {
    RAdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    std::vector<double> theta{0.0};
    RAdamState st;
    for (std::size_t t = 1; t <= 500; ++t) {
        const std::vector<double> g{2.0 * (theta[0] - 3.0)};
        radam_step(theta, g, st, t, cfg);
    }
    CHECK(std::abs(theta[0] - 3.0) < 0.05);
    CHECK(std::abs(theta[0] - fixtures::radam_quadratic_500) <= 1e-9);
}

TEST_CASE("training with zero epochs returns the initial model") {
    const SyntheticData d = synth_generate(small_spec(), 2);
    const TrainConfig cfg = small_train(0);
    const TrainResult r = train(d.dataset, 1, cfg);
    CHECK(r.epoch_loss.empty());
    ModelConfig mc = cfg.model;
    mc.d_raw = d.dataset.histology_dim();
    mc.t_bins = r.bin_edges.size() - 1;
    mc.seed = cfg.seed;
    const SurvMambaModel fresh(mc, d.dataset.grouping);
    CHECK(same_params(r.model.params(), fresh.params()));
    CHECK_THROWS_AS(train(d.dataset, 5, cfg), ConfigError);
}

TEST_CASE("training is deterministic and reduces the loss") {
    const SyntheticData d = synth_generate(small_spec(), 4);
    const TrainConfig cfg = small_train(20);
    const TrainResult a = train(d.dataset, 0, cfg);
    const TrainResult b = train(d.dataset, 0, cfg);
    REQUIRE(a.epoch_loss.size() == 20);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(same_params(a.model.params(), b.model.params()));
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    // Non-increasing over 5-epoch windows.
    std::vector<double> window;
    for (std::size_t w = 0; w < 4; ++w) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += a.epoch_loss[w * 5 + k];
        window.push_back(s / 5.0);
    }
    for (std::size_t w = 1; w < 4; ++w) CHECK(window[w] <= window[w - 1]);

    // Risks do not depend on the evaluation thread count.
    const auto members = d.dataset.fold_members(0);
    CHECK(predict_risks(a.model, d.dataset, members, 1) == predict_risks(a.model, d.dataset, members, 3));
}

TEST_CASE("constant-risk model has c-index one half") {
    const SyntheticData d = synth_generate(small_spec(), 6);
    TrainResult r = train(d.dataset, 0, small_train(0));
    for (double& v : r.model.params().at(r.model.head().weight->name).value.data()) v = 0.0;
    const EvalResult e = evaluate(r.model, d.dataset, 0, 1);
    REQUIRE(e.c_index.has_value());
    CHECK(*e.c_index == 0.5);
    for (auto g : e.groups) CHECK(g == RiskGroup::low);
    CHECK(e.logrank.degenerate);
}

TEST_CASE("checkpoint round trip gives bit-identical risks") {
    const fs::path dir = scratch("ckpt");
    const SyntheticData d = synth_generate(small_spec(), 8);
    const TrainResult r = train(d.dataset, 2, small_train(2));
    save_checkpoint(dir / "m.smck", r.model);
    CHECK(fs::exists(dir / "m.smck.config.json"));
    const SurvMambaModel back = load_checkpoint(dir / "m.smck");
    CHECK(same_params(r.model.params(), back.params()));
    const auto members = d.dataset.fold_members(2);
    CHECK(predict_risks(r.model, d.dataset, members, 1) == predict_risks(back, d.dataset, members, 1));

    std::ofstream(dir / "bad.smck", std::ios::binary) << "NOPE";
    fs::copy_file(dir / "m.smck.config.json", dir / "bad.smck.config.json");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.smck"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.smck"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("parameter counts agree with the closed form") {
    CHECK(linear_param_count(512, 256) == 131328);
    std::mt19937_64 rng(1);
    ParameterSet ps;
    make_linear(ps, "l", 512, 256, rng);
    CHECK(ps.scalar_count() == 131328);

    struct Case {
        ModelConfig cfg;
        GroupingConfig grouping;
    };
    std::vector<Case> cases;
    {
        ModelConfig c;
        c.dims = BlockDims{32, 64, 8, 4};
        cases.push_back({c, make_uniform_catalog(8, 4, 8)});
    }
    {
        ModelConfig c;
        c.dims = BlockDims{8, 16, 4, 2};
        c.d_raw = 6;
        c.genomic_hidden = 4;
        c.depth = 2;
        c.t_bins = 3;
        cases.push_back({c, make_uniform_catalog(2, 2, 3)});
    }
    {
        ModelConfig c;
        c.dims = BlockDims{16, 32, 16, 4};
        c.d_raw = 768;
        c.genomic_hidden = 8;
        cases.push_back({c, make_default_catalog(2)});
    }
    for (const auto& c : cases) {
        const SurvMambaModel m(c.cfg, c.grouping);
        const ComplexityReport rep = report_complexity(m, {});
        CHECK(rep.param_count == m.params().scalar_count());
        CHECK(rep.param_count == closed_form_param_count(c.cfg, c.grouping));
        CHECK(rep.closed_form == rep.param_count);
        CHECK(rep.flops > rep.scan_flops);
        CHECK(rep.scan_flops > 0.0);
    }
}

TEST_CASE("flop formulas are linear where documented") {
    CHECK(scan_flops(100, 128, 16) == 2.0 * scan_flops(100, 64, 16));
    CHECK(scan_flops(200, 64, 16) == 2.0 * scan_flops(100, 64, 16));
    const BlockDims d{32, 64, 8, 4};
    CHECK(bi_mamba_flops(200, d) == 2.0 * bi_mamba_flops(100, d));
    CHECK(ifm_flops(200, d) == 2.0 * ifm_flops(100, d));
}

TEST_CASE("train config parsing") {
    const TrainConfig c = train_config_from_json(nlohmann::json::parse(
        R"({"lr": 0.001, "weight_decay": 0.01, "epochs": 3, "seed": 9, "d_model": 8, "d_inner": 16})"));
    CHECK(c.optim.lr == 0.001);
    CHECK(c.optim.weight_decay == 0.01);
    CHECK(c.epochs == 3);
    CHECK(c.seed == 9);
    CHECK(c.model.dims.d_model == 8);
    const TrainConfig d;
    CHECK(d.optim.lr == 2e-4);
    CHECK(d.optim.weight_decay == 5e-3);
    CHECK(d.optim.beta1 == 0.9);
    CHECK(d.optim.beta2 == 0.999);
    CHECK(d.optim.eps == 1e-8);
}
