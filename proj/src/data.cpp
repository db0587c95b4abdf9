#include "survmamba/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "survmamba/error.hpp"

namespace survmamba {
namespace fs = std::filesystem;
using nlohmann::json;

std::size_t SurvivalDataset::histology_dim() const {
    return records.empty() ? 0 : records.front().histology.dim();
}

std::vector<std::size_t> SurvivalDataset::fold_members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < folds.size(); ++i)
        if (folds[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> SurvivalDataset::training_members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < folds.size(); ++i)
        if (folds[i] != fold) out.push_back(i);
    return out;
}

BinAssignment assign_bins(std::span<const double> times, std::span<const bool> censored, std::size_t t_bins) {
    if (times.size() != censored.size()) throw DimensionError("assign_bins: times and flags differ in length");
    if (t_bins < 1) throw ConfigError("assign_bins: need at least one bin");
    std::vector<double> ev;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (!censored[i]) ev.push_back(times[i]);
    if (ev.size() < t_bins) {
        throw ConfigError("assign_bins: " + std::to_string(ev.size()) + " uncensored records for " +
                          std::to_string(t_bins) + " bins");
    }
    std::sort(ev.begin(), ev.end());

    BinAssignment out;
    out.edges.push_back(0.0);
    for (std::size_t k = 1; k < t_bins; ++k) {
        const double h = static_cast<double>(ev.size() - 1) * static_cast<double>(k) / static_cast<double>(t_bins);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const double frac = h - static_cast<double>(lo);
        const double q = lo + 1 < ev.size() ? ev[lo] + frac * (ev[lo + 1] - ev[lo]) : ev[lo];
        if (!(q > out.edges.back())) throw ConfigError("assign_bins: quantile edges collapse (tied event times)");
        out.edges.push_back(q);
    }
    out.edges.push_back(std::numeric_limits<double>::infinity());
    for (double t : times) out.bins.push_back(bin_of(out.edges, t));
    return out;
}

std::size_t bin_of(std::span<const double> edges, double time) {
    const std::size_t t_bins = edges.size() - 1;
    for (std::size_t k = 0; k + 1 < t_bins; ++k)
        if (time <= edges[k + 1]) return k;
    return t_bins - 1;
}

void apply_bins(SurvivalDataset& data, std::size_t t_bins, std::span<const std::size_t> members,
                std::optional<std::vector<double>> edges) {
    if (edges) {
        if (edges->size() != t_bins + 1) throw ConfigError("bin edges must have T_bins + 1 entries");
        for (std::size_t k = 1; k < edges->size(); ++k)
            if (!((*edges)[k] > (*edges)[k - 1])) throw ConfigError("bin edges must be strictly increasing");
        data.bin_edges = std::move(*edges);
    } else {
        std::vector<std::size_t> idx(members.begin(), members.end());
        if (idx.empty()) {
            idx.resize(data.records.size());
            std::iota(idx.begin(), idx.end(), 0);
        }
        std::vector<double> times(idx.size());
        const auto cens = std::make_unique<bool[]>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            times[i] = data.records.at(idx[i]).time;
            cens[i] = data.records[idx[i]].censored;
        }
        data.bin_edges = assign_bins(times, std::span<const bool>(cens.get(), idx.size()), t_bins).edges;
    }
    for (auto& r : data.records) r.t_bin = bin_of(data.bin_edges, r.time);
}

std::vector<std::size_t> assign_folds(std::size_t n, std::uint64_t seed, std::size_t k) {
    if (k < 1) throw ConfigError("assign_folds: k must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> folds(n);
    for (std::size_t i = 0; i < n; ++i) folds[order[i]] = i % k;
    return folds;
}

void SynthSpec::validate() const {
    if (n_patients < 1 || regions < 1 || patches_per_region < 1 || histology_dim < 1 || processes < 1 ||
        functions_per_process < 1 || genes_per_function < 1 || t_bins < 1) {
        throw ConfigError("synth spec: all counts must be >= 1");
    }
    if (!(censoring_rate >= 0.0 && censoring_rate < 1.0)) throw ConfigError("synth spec: censoring_rate not in [0, 1)");
    if (!(noise >= 0.0) || !(base_hazard > 0.0) || !std::isfinite(beta)) {
        throw ConfigError("synth spec: need noise >= 0, base_hazard > 0, finite beta");
    }
    if (signal_region >= regions) throw ConfigError("synth spec: signal_region out of range");
    if (signal_function >= processes * functions_per_process) {
        throw ConfigError("synth spec: signal_function out of range");
    }
}

SyntheticData synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticData out;
    auto& ds = out.dataset;
    ds.grouping = make_uniform_catalog(spec.processes, spec.functions_per_process, spec.genes_per_function);
    const auto& signal_genes = ds.grouping.functions[spec.signal_function].genes;
    const std::size_t n_genes = ds.grouping.gene_count();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t p = 0; p < spec.n_patients; ++p) {
        const double u = normal(rng);
        PatientRecord r;
        r.id = "P" + std::to_string(p);
        r.histology.modality = Modality::histology;
        for (std::size_t g = 0; g < spec.regions; ++g) {
            Tensor feats(Shape{spec.patches_per_region, spec.histology_dim});
            const double shift = g == spec.signal_region ? u : 0.0;
            for (double& v : feats.data()) v = spec.noise * normal(rng) + shift;
            r.histology.groups.push_back({"R" + std::to_string(g), std::move(feats)});
        }
        r.expression = Tensor(Shape{n_genes});
        for (double& v : r.expression.data()) v = spec.noise * normal(rng);
        for (std::size_t gene : signal_genes) r.expression[gene] += u;

        std::exponential_distribution<double> event_time(spec.base_hazard * std::exp(spec.beta * u));
        double t = event_time(rng);
        const bool censored = unit(rng) < spec.censoring_rate;
        if (censored) t *= 1.0 - unit(rng);
        r.time = std::max(t, std::numeric_limits<double>::min());
        r.censored = censored;
        ds.records.push_back(std::move(r));
        out.latent.push_back(u);
    }
    ds.folds = assign_folds(ds.records.size(), seed);
    apply_bins(ds, spec.t_bins);
    return out;
}

namespace {

json read_json(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + " '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed ") + what + " '" + path.string() + "': " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void append_double(std::string& s, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    s.append(buf, res.ptr);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class T>
T parse_number(std::string_view tok, const fs::path& path, std::size_t line_no) {
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad number '" +
                        std::string(tok) + "'");
    }
    return v;
}

}  // namespace

SynthSpec load_synth_spec(const fs::path& path) {
    const json j = read_json(path, "synth spec");
    SynthSpec s;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    try {
        get("n_patients", s.n_patients);
        get("regions", s.regions);
        get("patches_per_region", s.patches_per_region);
        get("histology_dim", s.histology_dim);
        get("processes", s.processes);
        get("functions_per_process", s.functions_per_process);
        get("genes_per_function", s.genes_per_function);
        get("beta", s.beta);
        get("noise", s.noise);
        get("censoring_rate", s.censoring_rate);
        get("base_hazard", s.base_hazard);
        get("signal_region", s.signal_region);
        get("signal_function", s.signal_function);
        get("t_bins", s.t_bins);
    } catch (const json::exception& e) {
        throw ConfigError("synth spec '" + path.string() + "': " + e.what());
    }
    s.validate();
    return s;
}

HierarchicalBag read_bag(const fs::path& path, Modality modality) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature bag '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() -> std::vector<std::string_view> {
        while (std::getline(in, line)) {
            ++line_no;
            auto toks = split_ws(line);
            if (!toks.empty()) return toks;
        }
        throw DataError("'" + path.string() + "': unexpected end of file after line " + std::to_string(line_no));
    };

    auto header = next();
    if (header.size() != 3 || header[0] != "SMB1") {
        throw DataError("'" + path.string() + "': expected header 'SMB1 <n_groups> <dim>'");
    }
    const auto n_groups = parse_number<std::size_t>(header[1], path, line_no);
    const auto dim = parse_number<std::size_t>(header[2], path, line_no);
    if (dim < 1) throw DataError("'" + path.string() + "': dim must be >= 1");

    HierarchicalBag bag{modality, {}};
    for (std::size_t g = 0; g < n_groups; ++g) {
        const auto gh = next();
        if (gh.size() != 2) throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                                            ": expected '<group_id> <n_tokens>'");
        BagGroup group{std::string(gh[0]), {}};
        const auto n_tokens = parse_number<std::size_t>(gh[1], path, line_no);
        if (n_tokens < 1) throw DataError("'" + path.string() + "': group '" + group.id + "' is empty");
        Tensor t(Shape{n_tokens, dim});
        for (std::size_t k = 0; k < n_tokens; ++k) {
            const auto row = next();
            if (row.size() != dim) {
                throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": " +
                                std::to_string(row.size()) + " values, header declares dim " + std::to_string(dim));
            }
            for (std::size_t c = 0; c < dim; ++c) t[k * dim + c] = parse_number<double>(row[c], path, line_no);
        }
        group.tokens = std::move(t);
        bag.groups.push_back(std::move(group));
    }
    return bag;
}

void write_bag(const fs::path& path, const HierarchicalBag& bag) {
    bag.validate();
    const std::size_t dim = bag.dim();
    std::string s = "SMB1 " + std::to_string(bag.groups.size()) + " " + std::to_string(dim) + "\n";
    for (const auto& g : bag.groups) {
        s += g.id + " " + std::to_string(g.tokens.dim(0)) + "\n";
        for (std::size_t k = 0; k < g.tokens.dim(0); ++k) {
            for (std::size_t c = 0; c < dim; ++c) {
                if (c) s += ' ';
                append_double(s, g.tokens[k * dim + c]);
            }
            s += '\n';
        }
    }
    write_text(path, s);
}

json grouping_to_json(const GroupingConfig& cfg) {
    json j;
    j["processes"] = json::array();
    for (const auto& p : cfg.processes) j["processes"].push_back({{"id", p.id}, {"functions", p.functions}});
    j["functions"] = json::array();
    for (const auto& f : cfg.functions) j["functions"].push_back({{"id", f.id}, {"genes", f.genes}});
    return j;
}

GroupingConfig grouping_from_json(const json& j) {
    GroupingConfig cfg;
    try {
        for (const auto& p : j.at("processes")) {
            cfg.processes.push_back({p.at("id").get<std::string>(), p.at("functions").get<std::vector<std::string>>()});
        }
        for (const auto& f : j.at("functions")) {
            cfg.functions.push_back({f.at("id").get<std::string>(), f.at("genes").get<std::vector<std::size_t>>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("grouping config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

GroupingConfig read_grouping(const fs::path& path) {
    try {
        return grouping_from_json(read_json(path, "grouping config"));
    } catch (const DataError& e) {
        throw DataError("'" + path.string() + "': " + e.what());
    }
}

void write_grouping(const fs::path& path, const GroupingConfig& cfg) { write_text(path, grouping_to_json(cfg).dump(1) + "\n"); }

HierarchicalBag expression_to_bag(const Tensor& expr, const GroupingConfig& cfg) {
    HierarchicalBag bag{Modality::genomics, {}};
    for (const auto& f : cfg.functions) {
        Tensor t(Shape{f.genes.size(), 1});
        for (std::size_t k = 0; k < f.genes.size(); ++k) {
            if (f.genes[k] >= expr.size()) {
                throw DataError("function '" + f.id + "' references gene " + std::to_string(f.genes[k]) +
                                " beyond the expression vector");
            }
            t[k] = expr[f.genes[k]];
        }
        bag.groups.push_back({f.id, std::move(t)});
    }
    return bag;
}

Tensor bag_to_expression(const HierarchicalBag& bag, const GroupingConfig& cfg, const std::string& patient) {
    const std::size_t n_genes = cfg.gene_count();
    Tensor expr(Shape{n_genes});
    std::vector<char> seen(n_genes, 0);
    std::vector<char> covered(cfg.functions.size(), 0);
    for (const auto& g : bag.groups) {
        const std::size_t fi = cfg.function_index(g.id);
        if (fi >= cfg.functions.size()) {
            throw DataError("patient '" + patient + "': unknown function id '" + g.id + "' in genomics bag");
        }
        const auto& genes = cfg.functions[fi].genes;
        if (g.tokens.rank() != 2 || g.tokens.dim(0) != genes.size() || g.tokens.dim(1) != 1) {
            throw DataError("patient '" + patient + "': function '" + g.id + "' has shape " +
                            shape_str(g.tokens.shape()) + ", grouping expects [" + std::to_string(genes.size()) +
                            ", 1]");
        }
        for (std::size_t k = 0; k < genes.size(); ++k) {
            const double v = g.tokens[k];
            if (seen[genes[k]] && expr[genes[k]] != v) {
                throw DataError("patient '" + patient + "': gene " + std::to_string(genes[k]) +
                                " has conflicting values across functions");
            }
            expr[genes[k]] = v;
            seen[genes[k]] = 1;
        }
        covered[fi] = 1;
    }
    for (std::size_t i = 0; i < covered.size(); ++i) {
        if (!covered[i]) {
            throw DataError("patient '" + patient + "': genomics bag lacks function '" + cfg.functions[i].id + "'");
        }
    }
    return expr;
}

SurvivalDataset load_dataset(const fs::path& manifest, std::uint64_t fold_seed, std::size_t t_bins) {
    const json j = read_json(manifest, "manifest");
    const fs::path base = manifest.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    SurvivalDataset ds;
    std::optional<std::vector<double>> edges;
    bool has_folds = true;
    try {
        const fs::path gpath = resolve(j.at("grouping").get<std::string>());
        if (!fs::exists(gpath)) throw DataError("manifest references missing grouping config '" + gpath.string() + "'");
        ds.grouping = read_grouping(gpath);
        if (j.contains("bins") && !j.at("bins").is_null()) {
            std::vector<double> e;
            for (const auto& v : j.at("bins")) {
                e.push_back(v.is_string() && v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                           : v.get<double>());
            }
            t_bins = e.size() - 1;
            edges = std::move(e);
        }

        std::size_t d_raw = 0;
        for (const auto& p : j.at("patients")) {
            PatientRecord r;
            r.id = p.at("id").get<std::string>();
            const auto load = [&](const char* key, Modality m) {
                const fs::path fp = resolve(p.at(key).get<std::string>());
                if (!fs::exists(fp)) {
                    throw DataError("patient '" + r.id + "': missing " + key + " file '" + fp.string() + "'");
                }
                try {
                    return read_bag(fp, m);
                } catch (const DataError& e) {
                    throw DataError("patient '" + r.id + "': " + e.what());
                }
            };
            r.histology = load("histology", Modality::histology);
            try {
                r.histology.validate();
            } catch (const DataError& e) {
                throw DataError("patient '" + r.id + "': " + e.what());
            }
            if (d_raw == 0) d_raw = r.histology.dim();
            if (r.histology.dim() != d_raw) {
                throw DataError("patient '" + r.id + "': histology width " + std::to_string(r.histology.dim()) +
                                " differs from the first patient's " + std::to_string(d_raw));
            }
            r.expression = bag_to_expression(load("genomics", Modality::genomics), ds.grouping, r.id);
            r.time = p.at("time_months").get<double>();
            if (!(r.time > 0)) throw DataError("patient '" + r.id + "': time_months must be > 0");
            const auto& c = p.at("censored");
            r.censored = c.is_boolean() ? c.get<bool>() : c.get<int>() != 0;
            if (p.contains("fold")) {
                ds.folds.push_back(p.at("fold").get<std::size_t>());
                if (ds.folds.back() >= kFoldCount) throw DataError("patient '" + r.id + "': fold out of range");
            } else {
                has_folds = false;
            }
            ds.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError("manifest '" + manifest.string() + "': " + e.what());
    }
    if (ds.records.empty()) throw DataError("manifest '" + manifest.string() + "' lists no patients");
    if (!has_folds) ds.folds = assign_folds(ds.records.size(), fold_seed);
    ds.fixed_bins = edges.has_value();
    apply_bins(ds, t_bins, {}, std::move(edges));
    return ds;
}

fs::path save_dataset(const fs::path& dir, const SurvivalDataset& data) {
    fs::create_directories(dir / "bags");
    write_grouping(dir / "grouping.json", data.grouping);
    json m;
    m["grouping"] = "grouping.json";
    if (data.fixed_bins) {
        json e = json::array();
        for (double v : data.bin_edges) e.push_back(std::isinf(v) ? json("inf") : json(v));
        m["bins"] = e;
    }
    m["patients"] = json::array();
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& r = data.records[i];
        const std::string h = "bags/" + r.id + ".hist.smb";
        const std::string g = "bags/" + r.id + ".gen.smb";
        write_bag(dir / h, r.histology);
        write_bag(dir / g, expression_to_bag(r.expression, data.grouping));
        json p{{"id", r.id}, {"histology", h}, {"genomics", g}, {"time_months", r.time}, {"censored", r.censored}};
        if (i < data.folds.size()) p["fold"] = data.folds[i];
        m["patients"].push_back(std::move(p));
    }
    const fs::path path = dir / "manifest.json";
    write_text(path, m.dump(1) + "\n");
    return path;
}

}  // namespace survmamba
