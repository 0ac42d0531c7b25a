#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spacetime/dataset.hpp"
#include "spacetime/egcl.hpp"
#include "spacetime/etal.hpp"
#include "spacetime/nn.hpp"
#include "spacetime/tensor.hpp"

namespace spacetime {

enum class ModelKind { Set, Egnn, Mlp, Linear };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Architecture of any of the four predictors. Fields that a kind does not
/// use are ignored by it (and by its parameter count).
struct ModelConfig {
    ModelKind kind = ModelKind::Set;
    std::size_t n_particles = 5;
    std::size_t seq_len = 10;
    std::size_t horizon = 500;

    std::size_t feature_dim = 128;  // d
    std::size_t hidden_dim = 128;   // width of every EGCL and feed-forward MLP
    std::size_t egcl_layers = 2;    // K
    std::size_t blocks = 3;         // M

    bool equivariant = true;
    bool temporal_adjacency = false;
    bool spatial_attention = true;
    bool temporal_attention = true;
    bool positional_encoding = false;
    bool causal = false;
    bool recompute_edges = true;

    double position_coeff = 0.5;  // B
    double loss_alpha = 1.0;

    std::size_t mlp_hidden = 128;
    std::size_t mlp_layers = 5;

    std::uint64_t seed = 0;  // parameter initialisation

    // Defaults for one kind: the EGNN baseline uses K=3 and width 64.
    static ModelConfig defaults(ModelKind kind);
    void validate() const;
    // N, L and H must match the dataset the model is trained or run on.
    void check_compatible(const DatasetConfig& data) const;

    std::string to_json() const;
    // Missing keys keep the defaults of the kind named by "model".
    static ModelConfig from_json(const std::string& json);
};

// Parameter count derived from layer shapes alone, without building a model.
std::size_t closed_form_param_count(const ModelConfig& config);

/// Model inputs for B trajectories: frames t = 1..L as x, v [B,L,N,3],
/// charges [B,N], and the t = L+H targets [B,N,3].
struct Batch {
    Tensor x;
    Tensor v;
    Tensor charges;
    Tensor target_x;
    Tensor target_v;

    std::size_t size() const { return x.dim(0); }
};

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

// A_ij = c_i c_j with a zero diagonal, for charges [B,N] -> [B,N,N].
Tensor charge_adjacency(const Tensor& charges);

struct Prediction {
    Tensor x;  // [B,N,3]
    Tensor v;  // [B,N,3]
};

struct LossParts {
    Tensor total;  // pos + alpha * vel, scalar on the tape
    double pos_mse = 0.0;
    double vel_mse = 0.0;
};

// Mean over batch, nodes and coordinates of the squared errors.
LossParts prediction_loss(const Prediction& pred, const Tensor& target_x, const Tensor& target_v, double alpha);

class Model {
public:
    explicit Model(ModelConfig config) : config_(std::move(config)) {}
    virtual ~Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    virtual Prediction forward(const Batch& batch, const ForwardContext& ctx = {}) const = 0;

    const ModelConfig& config() const { return config_; }
    const ParamList& params() const { return params_; }
    std::size_t param_count() const { return params_.numel(); }

protected:
    ModelConfig config_;
    ParamList params_;
};

/// Everything one SpatiotempAttn block produces, time-major:
/// theta [B,L,N,d], xi/omega [B,L,N,3], adjacency [B,L,N,N].
struct BlockOutputs {
    Tensor theta;
    Tensor xi;
    Tensor omega;
    Tensor adjacency;
};

struct SetBlock {
    std::vector<Egcl> egcl;  // empty when spatial attention is off
    EtalParams etal;         // unused when temporal attention is off
    Mlp f_theta;
    Mlp f_adj;  // only with temporal adjacency attention
};

class SetModel final : public Model {
public:
    explicit SetModel(ModelConfig config);

    Prediction forward(const Batch& batch, const ForwardContext& ctx = {}) const override;
    // Final block outputs plus the temporal-mean prediction.
    BlockOutputs forward_blocks(const Batch& batch, const ForwardContext& ctx = {}) const;

    BlockOutputs block_forward(const SetBlock& block, const BlockOutputs& in, const ForwardContext& ctx) const;
    Tensor embed_features(const Tensor& v) const;

    Linear embed;
    std::vector<SetBlock> blocks;

private:
    bool adjacency_attention_on() const { return config_.temporal_attention && config_.temporal_adjacency; }
    PositionalEncodings encodings_;
};

// EGCL stack shared across time followed by the temporal mean.
class EgnnModel final : public Model {
public:
    explicit EgnnModel(ModelConfig config);
    Prediction forward(const Batch& batch, const ForwardContext& ctx = {}) const override;

    Linear embed;
    std::vector<Egcl> layers;
};

// Per-node MLP on the node's flattened input window, emitting (x, v).
class MlpModel final : public Model {
public:
    explicit MlpModel(ModelConfig config);
    Prediction forward(const Batch& batch, const ForwardContext& ctx = {}) const override;

    Mlp net;
};

// x(t) = x(t-1) + a v(t-1), v(t) = b v(t-1) + c rolled out H steps from the
// last input frame. Starts at a = 0, b = 1, c = 0 (persistence).
class LinearModel final : public Model {
public:
    explicit LinearModel(ModelConfig config);
    Prediction forward(const Batch& batch, const ForwardContext& ctx = {}) const override;

    Tensor alpha;
    Tensor beta;
    Tensor gamma;
};

std::unique_ptr<Model> make_model(const ModelConfig& config);

// Parameter values as a flat copy, for snapshots such as the best epoch.
std::vector<std::vector<double>> snapshot_params(const Model& model);
void restore_params(const Model& model, const std::vector<std::vector<double>>& snapshot);

void save_model(const std::filesystem::path& path, const Model& model);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

}  // namespace spacetime
