#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "spacetime/dataset.hpp"
#include "spacetime/model.hpp"

namespace spacetime {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // L2 penalty added to the gradient before the moment updates.
    double weight_decay = 0.0;
};

/// Adam with bias correction over every tensor of a ParamList.
class Adam {
public:
    Adam(const ParamList& params, AdamConfig config);

    // Consumes the accumulated gradients. Throws DivergenceError naming the
    // parameter if any gradient entry is not finite; parameters are left
    // untouched in that case.
    void step();
    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    const ParamList& params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

// Per-model learning rate and weight decay used when TrainConfig leaves them unset.
double default_learning_rate(ModelKind kind);
double default_weight_decay(ModelKind kind);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 100;
    double lr = 0.0;            // 0 selects default_learning_rate(kind)
    double weight_decay = -1.0;  // negative selects default_weight_decay(kind)
    double dropout = 0.1;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    std::filesystem::path checkpoint_path;  // best-validation model, when set

    std::string to_json() const;
    static TrainConfig from_json(const std::string& json);
};

struct EvalMetrics {
    double pos_mse = 0.0;
    double vel_mse = 0.0;
    // Mean squared error over every predicted scalar, positions and
    // velocities pooled: (pos_mse + vel_mse) / 2.
    double mse = 0.0;
    // Training objective pos_mse + alpha * vel_mse.
    double loss = 0.0;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 0 is the untrained model
    double train_loss = 0.0;
    double val_pos_mse = 0.0;
    double val_vel_mse = 0.0;
    double val_mse = 0.0;
    double wall_ms = 0.0;

    std::string to_json() const;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
};

// Runs the model in evaluation mode (no dropout, no tape) over a split.
EvalMetrics evaluate(const Model& model, const Dataset& dataset, std::size_t batch_size = 100);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Minimises pos_mse + alpha * vel_mse with Adam. Epoch 0 records the
// untrained model, with train_loss evaluated on the training split. At the
// end the parameters of the epoch with the lowest validation MSE are
// restored (and written to checkpoint_path if set).
TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace spacetime
