#include "survmamba/model.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "survmamba/error.hpp"
#include "survmamba/ops.hpp"

namespace survmamba {
namespace fs = std::filesystem;
using nlohmann::json;

void ModelConfig::validate() const {
    if (dims.d_model < 1 || dims.d_inner < 1 || dims.d_state < 1 || dims.conv_width < 1) {
        throw ConfigError("model dims must all be >= 1");
    }
    if (t_bins < 2) throw ConfigError("t_bins must be >= 2");
    if (d_raw < 1 || genomic_hidden < 1) throw ConfigError("d_raw and genomic_hidden must be >= 1");
    if (align_cap < 1) throw ConfigError("align length must be >= 1");
}

json to_json(const ModelConfig& c) {
    return {{"d_model", c.dims.d_model},         {"d_inner", c.dims.d_inner},
            {"d_state", c.dims.d_state},         {"conv_width", c.dims.conv_width},
            {"t_bins", c.t_bins},                {"d_raw", c.d_raw},
            {"genomic_hidden", c.genomic_hidden}, {"depth", c.depth},
            {"align_len", c.align_cap},          {"mode", std::string(to_string(c.mode))},
            {"pool", std::string(to_string(c.pool))}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    try {
        get("d_model", c.dims.d_model);
        get("d_inner", c.dims.d_inner);
        get("d_state", c.dims.d_state);
        get("conv_width", c.dims.conv_width);
        get("t_bins", c.t_bins);
        get("d_raw", c.d_raw);
        get("genomic_hidden", c.genomic_hidden);
        get("depth", c.depth);
        get("align_len", c.align_cap);
        get("seed", c.seed);
        if (j.contains("mode")) c.mode = parse_discretization(j.at("mode").get<std::string>());
        if (j.contains("pool")) c.pool = parse_pool_mode(j.at("pool").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

SurvMambaModel::SurvMambaModel(const ModelConfig& cfg, GroupingConfig grouping)
    : cfg_(cfg), grouping_(std::move(grouping)) {
    cfg_.validate();
    grouping_.validate();
    Rng rng(cfg_.seed);
    const std::size_t D = cfg_.dims.d_model;
    hist_proj_ = make_linear(params_, "hist.proj", cfg_.d_raw, D, rng);
    gen_enc_ = make_genomics_encoder(params_, "gen.enc", grouping_, cfg_.genomic_hidden, D, rng);
    auto build_level = [&](const std::string& name, std::vector<BiMambaBlock>& level) {
        for (std::size_t k = 0; k < cfg_.depth; ++k) {
            level.push_back(make_bi_mamba_block(params_, name + "." + std::to_string(k), cfg_.dims, cfg_.mode, rng));
        }
    };
    build_level("him.hist.fine", hist_him_.fine);
    build_level("him.hist.coarse", hist_him_.coarse);
    build_level("him.gen.fine", gen_him_.fine);
    build_level("him.gen.coarse", gen_him_.coarse);
    ifm_fine_ = make_ifm_block(params_, "ifm.fine", cfg_.dims, cfg_.mode, rng);
    ifm_coarse_ = make_ifm_block(params_, "ifm.coarse", cfg_.dims, cfg_.mode, rng);
    alpha_.raw = &params_.add("alpha", Tensor::scalar(0.0));
    head_ = make_linear(params_, "head", D, cfg_.t_bins, rng);
}

ForwardResult SurvMambaModel::forward(Tape& tape, const PatientRecord& patient) const {
    const TokenGroups hist = encode_histology(tape, patient.histology, hist_proj_);
    const TokenGroups gen = encode_genomics(tape, patient.expression, grouping_, gen_enc_);
    const HimOutput hh = him_forward(tape, hist, hist_him_, cfg_.pool);
    const HimOutput gh = him_forward(tape, gen, gen_him_, cfg_.pool);

    const Var ti = concat_groups(hh.fine);
    const Var tg = concat_groups(gh.fine);
    const std::size_t len = default_align_length(ti.value().dim(0), tg.value().dim(0), cfg_.align_cap);
    const auto [ai, ag] = align_fine_tokens(ti, tg, len);

    ForwardResult out;
    out.features.fine = fuse_fine(tape, ai, ag, ifm_fine_);
    out.features.coarse = fuse_coarse(tape, hh.coarse, gh.coarse, ifm_coarse_);
    out.features.mixed = adaptive_fuse(tape, out.features.fine, out.features.coarse, alpha_);
    out.hazards = hazard_head(tape, out.features.mixed, head_);
    return out;
}

Var SurvMambaModel::loss(Tape& tape, const PatientRecord& patient) const {
    return survival_nll(forward(tape, patient).hazards, patient.t_bin, patient.censored);
}

HazardOutput SurvMambaModel::predict(const PatientRecord& patient) const {
    Tape tape(false);
    return hazard_output(forward(tape, patient).hazards.value());
}

std::size_t closed_form_param_count(const ModelConfig& cfg, const GroupingConfig& grouping) {
    const std::size_t D = cfg.dims.d_model, H = cfg.genomic_hidden;
    std::size_t n = linear_param_count(cfg.d_raw, D);
    for (const auto& f : grouping.functions) n += linear_param_count(f.genes.size(), H) + linear_param_count(H, D);
    n += 4 * cfg.depth * bi_mamba_param_count(cfg.dims);
    n += 2 * ifm_param_count(cfg.dims);
    n += 1;
    n += linear_param_count(D, cfg.t_bins);
    return n;
}

namespace {

double lin(double m, double in, double out) { return 2 * m * in * out + m * out; }

double ssm_branch_flops(double m, const BlockDims& d, double& scan) {
    const double E = d.d_inner, N = d.d_state, W = d.conv_width;
    const double s = scan_flops(static_cast<std::size_t>(m), d.d_inner, d.d_state);
    scan += s;
    return (2 * m * E * W + m * E) + 4 * m * E + 2 * lin(m, E, N) + lin(m, E, E) + 4 * m * E + s;
}

double bi_mamba_flops_impl(double m, const BlockDims& d, double& scan) {
    const double D = d.d_model, E = d.d_inner;
    return 8 * m * D + 2 * lin(m, D, E) + 2 * ssm_branch_flops(m, d, scan) + 4 * m * E + 3 * m * E +
           lin(m, E, D) + m * D;
}

double ifm_flops_impl(double m, const BlockDims& d, double& scan) {
    const double D = d.d_model, E = d.d_inner;
    double f = 0;
    for (int k = 0; k < 2; ++k) f += 8 * m * D + lin(m, D, E) + ssm_branch_flops(m, d, scan);
    return f + 2 * lin(m, D, E) + 2 * 4 * m * E + 2 * m * E + lin(m, 2 * E, D);
}

}  // namespace

double scan_flops(std::size_t m, std::size_t e, std::size_t n) {
    return 9.0 * static_cast<double>(m) * static_cast<double>(e) * static_cast<double>(n);
}

double bi_mamba_flops(std::size_t m, const BlockDims& dims) {
    double scan = 0;
    return bi_mamba_flops_impl(static_cast<double>(m), dims, scan);
}

double ifm_flops(std::size_t m, const BlockDims& dims) {
    double scan = 0;
    return ifm_flops_impl(static_cast<double>(m), dims, scan);
}

ComplexityReport report_complexity(const SurvMambaModel& model, const ComplexityInput& input) {
    const auto& cfg = model.config();
    const auto& grouping = model.grouping();
    const auto& d = cfg.dims;
    const double D = d.d_model, H = cfg.genomic_hidden, T = cfg.t_bins;

    ComplexityReport r;
    r.param_count = model.params().scalar_count();
    r.closed_form = closed_form_param_count(cfg, grouping);

    double scan = 0, f = 0;
    const double l_i = static_cast<double>(input.regions * input.patches_per_region);
    f += lin(l_i, cfg.d_raw, D);
    double l_g = 0;
    for (const auto& fn : grouping.functions) {
        f += lin(1, fn.genes.size(), H) + 4 * H + lin(1, H, D);
    }
    for (const auto& p : grouping.processes) l_g += static_cast<double>(p.functions.size());

    const double g_i = input.regions, g_g = grouping.processes.size();
    for (std::size_t k = 0; k < cfg.depth; ++k) {
        for (std::size_t g = 0; g < input.regions; ++g) f += bi_mamba_flops_impl(input.patches_per_region, d, scan);
        for (const auto& p : grouping.processes) f += bi_mamba_flops_impl(p.functions.size(), d, scan);
        f += bi_mamba_flops_impl(g_i, d, scan) + bi_mamba_flops_impl(g_g, d, scan);
    }
    f += (l_i + l_g) * D;  // pooling

    const double l_fine = std::min({l_i, l_g, static_cast<double>(cfg.align_cap)});
    const double l_coarse = std::min(g_i, g_g);
    f += (l_i + l_g) * D + (g_i + g_g) * D;  // alignment
    f += ifm_flops_impl(l_fine, d, scan) + l_fine * D;
    f += ifm_flops_impl(l_coarse, d, scan) + l_coarse * D;
    f += 3 * D;                        // adaptive mix
    f += lin(1, D, T) + 4 * T + 2 * T;  // head and survival product
    r.flops = f;
    r.scan_flops = scan;
    return r;
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(std::string bytes, std::string path) : b_(std::move(bytes)), path_(std::move(path)) {}
    std::uint64_t uint(int width) {
        need(width);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += width;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw DataError("checkpoint '" + path_ + "' is truncated");
    }
    std::string b_;
    std::string path_;
    std::size_t pos_ = 0;
};

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".config.json"); }

}  // namespace

void save_checkpoint(const fs::path& path, const SurvMambaModel& model) {
    std::string s = "SMCK";
    put_u32(s, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
        put_u32(s, static_cast<std::uint32_t>(p->name.size()));
        s += p->name;
        put_u32(s, static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape()) put_u64(s, d);
        for (double v : p->value.data()) put_u64(s, std::bit_cast<std::uint64_t>(v));
    }
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
        out << s;
    }
    const json g = grouping_to_json(model.grouping());
    std::ofstream cfg_out(sidecar(path));
    if (!cfg_out) throw DataError("cannot write '" + sidecar(path).string() + "'");
    cfg_out << json{{"model", to_json(model.config())}, {"grouping", g}}.dump(1) << "\n";
}

SurvMambaModel load_checkpoint(const fs::path& path) {
    std::ifstream cin(sidecar(path));
    if (!cin) throw DataError("missing checkpoint config '" + sidecar(path).string() + "'");
    json meta;
    try {
        meta = json::parse(cin);
    } catch (const json::exception& e) {
        throw DataError("checkpoint config '" + sidecar(path).string() + "': " + e.what());
    }
    if (!meta.contains("model") || !meta.contains("grouping")) {
        throw DataError("checkpoint config '" + sidecar(path).string() + "' lacks model or grouping");
    }
    GroupingConfig grouping = grouping_from_json(meta.at("grouping"));
    SurvMambaModel model(model_config_from_json(meta.at("model")), std::move(grouping));

    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    Reader r(std::string(std::istreambuf_iterator<char>(in), {}), path.string());
    if (r.bytes(4) != "SMCK") throw DataError("'" + path.string() + "' is not an SMCK checkpoint");
    const std::size_t count = r.uint(4);
    if (count != model.params().size()) {
        throw DataError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                        std::to_string(model.params().size()));
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::string name = r.bytes(r.uint(4));
        Parameter* p = model.params().find(name);
        if (!p) throw DataError("checkpoint parameter '" + name + "' is unknown to the model");
        Shape shape(r.uint(4));
        for (auto& d : shape) d = r.uint(8);
        if (shape != p->value.shape()) {
            throw DataError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(p->value.shape()));
        }
        for (double& v : p->value.data()) v = std::bit_cast<double>(r.uint(8));
    }
    if (!r.done()) throw DataError("checkpoint '" + path.string() + "' has trailing bytes");
    return model;
}

}  // namespace survmamba
