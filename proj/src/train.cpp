#include "survmamba/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "survmamba/error.hpp"

namespace survmamba {
using nlohmann::json;

double radam_rho(std::size_t step, double beta2) {
    const double t = static_cast<double>(step);
    const double bt = std::pow(beta2, t);
    const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    return rho_inf - 2.0 * t * bt / (1.0 - bt);
}

void radam_step(std::span<double> params, std::span<const double> grads, RAdamState& state, std::size_t step,
                const RAdamConfig& cfg) {
    if (step < 1) throw ConfigError("radam_step: step counts from 1");
    if (grads.size() != params.size()) throw DimensionError("radam_step: gradient size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    const double t = static_cast<double>(step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const double rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
    const double rho = radam_rho(step, cfg.beta2);
    const bool rectified = rho > 4.0;
    const double r = rectified ? std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                               : 0.0;
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        params[i] *= decay;
        if (rectified) {
            const double v_hat = std::sqrt(state.v[i] / bc2);
            params[i] -= cfg.lr * r * m_hat / (v_hat + cfg.eps);
        } else {
            params[i] -= cfg.lr * m_hat;
        }
    }
}

void RAdam::step(ParameterSet& params) {
    ++t_;
    for (auto& p : params) {
        Tensor& v = p->value;
        if (!v.has_grad()) v.zero_grad();
        radam_step(v.data(), v.grad(), state_[p.get()], t_, cfg_);
    }
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    try {
        if (j.contains("lr")) c.optim.lr = j.at("lr").get<double>();
        if (j.contains("weight_decay")) c.optim.weight_decay = j.at("weight_decay").get<double>();
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    if (!(c.optim.lr > 0) || c.optim.weight_decay < 0) throw ConfigError("train config: need lr > 0, weight_decay >= 0");
    c.model = model_config_from_json(j);
    c.model.seed = c.seed;
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open train config '" + path.string() + "'");
    try {
        return train_config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError("train config '" + path.string() + "': " + e.what());
    }
}

TrainResult train(const SurvivalDataset& data, std::size_t fold, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (fold >= kFoldCount) throw ConfigError("fold must be in 0..4, got " + std::to_string(fold));
    if (data.folds.size() != data.records.size()) throw DataError("dataset has no fold assignment");
    const std::vector<std::size_t> members = data.training_members(fold);
    if (members.empty()) throw DataError("fold " + std::to_string(fold) + " leaves no training records");

    std::vector<double> edges = data.bin_edges;
    if (!data.fixed_bins) {
        std::vector<double> times;
        const auto cens = std::make_unique<bool[]>(members.size());
        for (std::size_t k = 0; k < members.size(); ++k) {
            times.push_back(data.records[members[k]].time);
            cens[k] = data.records[members[k]].censored;
        }
        const std::size_t t_bins = data.t_bins() ? data.t_bins() : cfg.model.t_bins;
        edges = assign_bins(times, std::span<const bool>(cens.get(), members.size()), t_bins).edges;
    }

    ModelConfig mc = cfg.model;
    mc.d_raw = data.histology_dim();
    mc.t_bins = edges.size() - 1;
    mc.seed = cfg.seed;
    TrainResult result{SurvMambaModel(mc, data.grouping), {}, edges};
    ParameterSet& params = result.model.params();
    RAdam opt(cfg.optim);

    std::vector<std::size_t> order = members;
    Rng shuffle_rng(cfg.seed ^ 0x5eed5eed5eed5eedULL);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t idx : order) {
            const PatientRecord& rec = data.records[idx];
            Tape tape;
            const Var hazards = result.model.forward(tape, rec).hazards;
            const Var loss = survival_nll(hazards, bin_of(edges, rec.time), rec.censored);
            const double value = loss.value()[0];
            if (!std::isfinite(value)) {
                throw EvaluationError("non-finite loss for patient '" + rec.id + "' in epoch " + std::to_string(epoch));
            }
            params.zero_grad();
            tape.backward(loss);
            opt.step(params);
            total += value;
        }
        result.epoch_loss.push_back(total / static_cast<double>(order.size()));
        if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
    }
    return result;
}

std::size_t evaluation_threads() {
    if (const char* env = std::getenv("SURVMAMBA_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
        throw ConfigError("SURVMAMBA_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::vector<double> predict_risks(const SurvMambaModel& model, const SurvivalDataset& data,
                                  std::span<const std::size_t> members, std::size_t threads) {
    std::vector<double> risks(members.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t k = next++; k < members.size(); k = next++) {
            try {
                risks[k] = model.predict(data.records[members[k]]).risk;
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, members.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return risks;
}

EvalResult evaluate(const SurvMambaModel& model, const SurvivalDataset& data, std::size_t fold, std::size_t threads) {
    if (fold >= kFoldCount) throw ConfigError("fold must be in 0..4, got " + std::to_string(fold));
    const std::vector<std::size_t> members = data.fold_members(fold);
    if (members.size() < 2) throw DataError("fold " + std::to_string(fold) + " holds fewer than 2 records");

    EvalResult r;
    r.risks = predict_risks(model, data, members, threads ? threads : evaluation_threads());
    for (std::size_t i : members) {
        r.ids.push_back(data.records[i].id);
        r.outcomes.push_back(data.records[i].outcome());
    }
    try {
        r.c_index = concordance_index(r.risks, r.outcomes);
    } catch (const UndefinedResultError& e) {
        r.c_index_note = e.what();
    }
    r.groups = risk_stratify(r.risks);
    std::vector<SurvivalOutcome> low, high;
    for (std::size_t k = 0; k < r.outcomes.size(); ++k)
        (r.groups[k] == RiskGroup::high ? high : low).push_back(r.outcomes[k]);
    if (!low.empty()) r.km_low = kaplan_meier(low);
    if (!high.empty()) r.km_high = kaplan_meier(high);
    if (!low.empty() && !high.empty()) {
        r.logrank = logrank_test(low, high);
    } else {
        r.logrank.degenerate = true;
    }
    return r;
}

std::string km_table(const KmCurve& low, std::span<const SurvivalOutcome> low_outcomes, const KmCurve& high,
                     std::span<const SurvivalOutcome> high_outcomes) {
    std::vector<double> times = low.times;
    times.insert(times.end(), high.times.begin(), high.times.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    auto at_risk = [](std::span<const SurvivalOutcome> o, double t) {
        return std::count_if(o.begin(), o.end(), [t](const SurvivalOutcome& s) { return s.time >= t; });
    };
    std::ostringstream out;
    out.precision(10);
    out << "time\tsurv_low\tat_risk_low\tsurv_high\tat_risk_high\n";
    out << 0.0 << '\t' << 1.0 << '\t' << low_outcomes.size() << '\t' << 1.0 << '\t' << high_outcomes.size() << '\n';
    for (double t : times) {
        out << t << '\t' << low.at(t) << '\t' << at_risk(low_outcomes, t) << '\t' << high.at(t) << '\t'
            << at_risk(high_outcomes, t) << '\n';
    }
    return out.str();
}

}  // namespace survmamba
