#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "survmamba/data.hpp"
#include "survmamba/model.hpp"
#include "survmamba/survstats.hpp"

namespace survmamba {

struct RAdamConfig {
    double lr = 2e-4;
    double weight_decay = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t), rho_inf = 2 / (1 - beta2) - 1.
double radam_rho(std::size_t step, double beta2);

struct RAdamState {
    std::vector<double> m;
    std::vector<double> v;
};

// One update of `params` in place; `step` counts from 1. Weight decay
// multiplies params by (1 - lr * wd) before the moment step.
void radam_step(std::span<double> params, std::span<const double> grads, RAdamState& state, std::size_t step,
                const RAdamConfig& cfg);

class RAdam {
public:
    explicit RAdam(RAdamConfig cfg) : cfg_(cfg) {}
    // Applies one step to every parameter using its accumulated gradient.
    void step(ParameterSet& params);
    std::size_t steps() const { return t_; }

private:
    RAdamConfig cfg_;
    std::size_t t_ = 0;
    std::unordered_map<const Parameter*, RAdamState> state_;
};

struct TrainConfig {
    RAdamConfig optim;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    ModelConfig model;  // d_raw and t_bins are taken from the dataset
};

// Keys: lr, weight_decay, epochs, seed and every ModelConfig key.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainResult {
    SurvMambaModel model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
    std::vector<double> bin_edges;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Per-patient updates over the out-of-fold records in a seeded order. Bin
// edges come from the training records unless the dataset fixes them.
// Throws EvaluationError naming the patient on a non-finite loss.
TrainResult train(const SurvivalDataset& data, std::size_t fold, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
    std::vector<std::string> ids;
    std::vector<double> risks;
    std::vector<SurvivalOutcome> outcomes;
    std::optional<double> c_index;  // empty when no pair is comparable
    std::string c_index_note;
    std::vector<RiskGroup> groups;
    KmCurve km_low;
    KmCurve km_high;
    LogRankResult logrank;
};

// SURVMAMBA_THREADS, else hardware concurrency; at least 1.
std::size_t evaluation_threads();

// Risks depend only on the model, never on the thread schedule.
std::vector<double> predict_risks(const SurvMambaModel& model, const SurvivalDataset& data,
                                  std::span<const std::size_t> members, std::size_t threads);

EvalResult evaluate(const SurvMambaModel& model, const SurvivalDataset& data, std::size_t fold,
                    std::size_t threads = 0);

// Two-group table: time, then survival and at-risk for low and high.
std::string km_table(const KmCurve& low, std::span<const SurvivalOutcome> low_outcomes, const KmCurve& high,
                     std::span<const SurvivalOutcome> high_outcomes);

}  // namespace survmamba
