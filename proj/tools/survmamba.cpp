#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "survmamba/data.hpp"
#include "survmamba/error.hpp"
#include "survmamba/grad_suite.hpp"
#include "survmamba/model.hpp"
#include "survmamba/ssm.hpp"
#include "survmamba/survstats.hpp"
#include "survmamba/train.hpp"

namespace fs = std::filesystem;
using namespace survmamba;

namespace {

std::vector<std::vector<double>> read_table(const fs::path& path, std::size_t min_cols) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> row;
        for (double v; ss >> v;) row.push_back(v);
        if (!ss.eof() || row.size() < min_cols) {
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                            std::to_string(min_cols) + " numeric columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
}

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

int cmd_synth(const fs::path& spec_path, std::uint64_t seed, const fs::path& out) {
    const SynthSpec spec = spec_path.empty() ? SynthSpec{} : load_synth_spec(spec_path);
    const SyntheticData synth = synth_generate(spec, seed);
    const fs::path manifest = save_dataset(out, synth.dataset);
    std::vector<SurvivalOutcome> outcomes;
    std::size_t censored = 0;
    for (const auto& r : synth.dataset.records) {
        outcomes.push_back(r.outcome());
        censored += r.censored;
    }
    std::cout << "wrote " << synth.dataset.records.size() << " patients to " << manifest.string() << "\n";
    std::cout << "censored " << censored << "\n";
    std::cout << "oracle_c_index " << fmt(concordance_index(synth.latent, outcomes)) << "\n";
    return 0;
}

int cmd_train(const fs::path& data_path, std::size_t fold, const fs::path& config, const fs::path& out) {
    const TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
    const SurvivalDataset data = load_dataset(data_path, cfg.seed);
    const TrainResult res = train(data, fold, cfg, [](std::size_t epoch, double loss) {
        std::cout << "epoch " << epoch + 1 << " loss " << fmt(loss, 10) << std::endl;
    });
    save_checkpoint(out, res.model);
    std::cout << "saved " << out.string() << " (" << res.model.params().scalar_count() << " parameters)\n";
    return 0;
}

int cmd_eval(const fs::path& data_path, std::size_t fold, const fs::path& ckpt, fs::path km_out) {
    const SurvMambaModel model = load_checkpoint(ckpt);
    const SurvivalDataset data = load_dataset(data_path, model.config().seed);
    const EvalResult r = evaluate(model, data, fold);
    if (r.c_index) {
        std::cout << "c_index " << fmt(*r.c_index) << "\n";
    } else {
        std::cout << "c_index undefined (" << r.c_index_note << ")\n";
    }
    std::cout << "logrank_chi2 " << fmt(r.logrank.chi2) << "\n";
    std::cout << "logrank_p " << fmt(r.logrank.p) << (r.logrank.degenerate ? " (degenerate)" : "") << "\n";

    std::vector<SurvivalOutcome> low, high;
    for (std::size_t k = 0; k < r.outcomes.size(); ++k)
        (r.groups[k] == RiskGroup::high ? high : low).push_back(r.outcomes[k]);
    if (km_out.empty()) km_out = fs::path(ckpt.string() + ".km.tsv");
    write_file(km_out, km_table(r.km_low, low, r.km_high, high));
    std::cout << "km_table " << km_out.string() << "\n";
    return 0;
}

int cmd_gradcheck(const fs::path& config, const std::string& module) {
    GradSuiteConfig cfg;
    if (!config.empty()) {
        std::ifstream in(config);
        if (!in) throw ConfigError("cannot open gradcheck config '" + config.string() + "'");
        cfg = grad_suite_config_from_json(nlohmann::json::parse(in));
    }
    bool ok = true;
    for (const auto& e : run_grad_suite(cfg, module)) {
        ok = ok && e.passed();
        std::cout << (e.passed() ? "ok   " : "FAIL ") << e.module << "/" << e.name << " max_rel_error "
                  << fmt(e.result.max_rel_error, 3) << " tol " << fmt(e.tolerance, 2) << " entries "
                  << e.result.entries;
        if (!e.passed()) {
            std::cout << " worst " << e.result.worst_param << "[" << e.result.worst_index << "] analytic "
                      << fmt(e.result.analytic, 10) << " numeric " << fmt(e.result.numeric, 10);
        }
        std::cout << "\n";
    }
    return ok ? 0 : 1;
}

int cmd_scan_bench(ScanBenchConfig cfg, const std::vector<std::string>& modes) {
    if (!modes.empty()) {
        cfg.modes.clear();
        for (const auto& m : modes) cfg.modes.push_back(parse_scan_mode(m));
    }
    const ScanBenchResult r = run_scan_bench(cfg);
    std::cout << "scan-bench M=" << cfg.length << " E=" << cfg.channels << " N=" << cfg.state << " reps=" << cfg.reps
              << "\n";
    for (const auto& t : r.timings) {
        std::cout << "  " << to_string(t.mode) << ": best " << fmt(t.best_seconds * 1e3, 4) << " ms, mean "
                  << fmt(t.mean_seconds * 1e3, 4) << " ms\n";
    }
    std::cout << "  max deviation between modes " << fmt(r.max_deviation, 3) << "\n";
    for (const auto& t : r.timings) {
        std::cout << "BENCH mode=" << to_string(t.mode) << " len=" << cfg.length << " channels=" << cfg.channels
                  << " state=" << cfg.state << " best_s=" << fmt(t.best_seconds, 9) << " mean_s="
                  << fmt(t.mean_seconds, 9) << "\n";
    }
    return 0;
}

int cmd_km(const fs::path& risks_path, const fs::path& outcomes_path) {
    const auto risk_rows = read_table(risks_path, 1);
    const auto out_rows = read_table(outcomes_path, 2);
    if (risk_rows.size() != out_rows.size()) {
        throw DataError(std::to_string(risk_rows.size()) + " risks but " + std::to_string(out_rows.size()) +
                        " outcomes");
    }
    std::vector<double> risks;
    std::vector<SurvivalOutcome> outcomes;
    for (std::size_t i = 0; i < risk_rows.size(); ++i) {
        risks.push_back(risk_rows[i].back());
        if (!(out_rows[i][0] > 0)) throw DataError("outcome row " + std::to_string(i + 1) + ": time must be > 0");
        outcomes.push_back({out_rows[i][0], out_rows[i][1] != 0});
    }
    const auto groups = risk_stratify(risks);
    std::vector<SurvivalOutcome> low, high;
    for (std::size_t k = 0; k < outcomes.size(); ++k) (groups[k] == RiskGroup::high ? high : low).push_back(outcomes[k]);
    const KmCurve km_low = low.empty() ? KmCurve{} : kaplan_meier(low);
    const KmCurve km_high = high.empty() ? KmCurve{} : kaplan_meier(high);
    LogRankResult lr;
    lr.degenerate = true;
    if (!low.empty() && !high.empty()) lr = logrank_test(low, high);
    std::cout << km_table(km_low, low, km_high, high);
    std::cout << "# chi2 " << fmt(lr.chi2, 8) << " p " << fmt(lr.p, 8) << (lr.degenerate ? " degenerate" : "")
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical multimodal selective-SSM survival model"};
    app.require_subcommand(1);

    fs::path spec_path, synth_out;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--spec", spec_path, "Synthetic spec JSON (defaults when omitted)");
    synth->add_option("--seed", synth_seed, "Random seed");
    synth->add_option("--out", synth_out, "Output directory")->required();

    fs::path data_path, config_path, ckpt_path, km_out;
    std::size_t fold = 0;
    auto* tr = app.add_subcommand("train", "Train on the out-of-fold records");
    tr->add_option("--data", data_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
    tr->add_option("--fold", fold, "Held-out fold (0-4)")->check(CLI::Range(0, 4));
    tr->add_option("--config", config_path, "Training config JSON")->check(CLI::ExistingFile);
    tr->add_option("--out", ckpt_path, "Checkpoint path")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a held-out fold");
    ev->add_option("--data", data_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--fold", fold, "Held-out fold (0-4)")->check(CLI::Range(0, 4));
    ev->add_option("--ckpt", ckpt_path, "Checkpoint path")->required()->check(CLI::ExistingFile);
    ev->add_option("--km-out", km_out, "Kaplan-Meier table output path");

    std::string module = "all";
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    gc->add_option("--config", config_path, "Gradcheck config JSON")->check(CLI::ExistingFile);
    gc->add_option("--module", module, "primitives | blocks | him | pipeline | all");

    ScanBenchConfig bench;
    std::vector<std::string> modes;
    auto* sb = app.add_subcommand("scan-bench", "Time the scan kernels");
    sb->add_option("--len", bench.length, "Sequence length M")->check(CLI::PositiveNumber);
    sb->add_option("--channels", bench.channels, "Channels E")->check(CLI::PositiveNumber);
    sb->add_option("--state", bench.state, "State size N")->check(CLI::PositiveNumber);
    sb->add_option("--mode", modes, "recurrent | parallel | conv (repeatable)")->delimiter(',');
    sb->add_option("--reps", bench.reps, "Repetitions")->check(CLI::PositiveNumber);
    sb->add_option("--seed", bench.seed, "Random seed");
    std::size_t flush_mb = bench.flush_bytes >> 20;
    sb->add_option("--flush-mb", flush_mb, "Cache sweep before each repetition, MiB (0 = warm timing)");

    fs::path risks_path, outcomes_path;
    auto* km = app.add_subcommand("km", "Median-split Kaplan-Meier table and log-rank test");
    km->add_option("--risks", risks_path, "One risk per line (last column used)")->required()->check(CLI::ExistingFile);
    km->add_option("--outcomes", outcomes_path, "Lines of '<time> <event>'")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(spec_path, synth_seed, synth_out);
        if (*tr) return cmd_train(data_path, fold, config_path, ckpt_path);
        if (*ev) return cmd_eval(data_path, fold, ckpt_path, km_out);
        if (*gc) return cmd_gradcheck(config_path, module);
        if (*sb) {
            bench.flush_bytes = flush_mb << 20;
            return cmd_scan_bench(bench, modes);
        }
        if (*km) return cmd_km(risks_path, outcomes_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
